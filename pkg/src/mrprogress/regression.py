"""Running-time prediction from (input size, running time) profile points."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DeltaPolicy
from .sketches import SmoothedPointSet

C_MIN = 0.0
C_MAX = 6.0
_SCAN_STEP = 0.025
_MAX_ITER = 200
_REL_TOL = 1e-9

STEP_LOCAL_NN = 1
STEP_LOCAL_FIT = 2
STEP_GLOBAL_NN = 3
STEP_GLOBAL_FIT = 4
STEP_FALLBACK = 5


class NoPrediction(LookupError):
    """None of the four prediction steps applies."""


class PointIndex:
    """Immutable, size-sorted snapshot of weighted profile points."""

    __slots__ = ("sizes", "means", "counts", "_cum_n", "_cum_t")

    def __init__(self, triples=()):
        triples = sorted(triples)
        self.sizes = np.array([t[0] for t in triples], dtype=float)
        self.means = np.array([t[1] for t in triples], dtype=float)
        self.counts = np.array([t[2] for t in triples], dtype=float)
        self._cum_n = np.concatenate(([0.0], np.cumsum(self.counts)))
        self._cum_t = np.concatenate(([0.0], np.cumsum(self.counts * self.means)))

    def __len__(self):
        return len(self.sizes)

    @property
    def total_count(self):
        return float(self._cum_n[-1])

    @property
    def total_time(self):
        return float(self._cum_t[-1])

    @property
    def total_bytes(self):
        return float(np.dot(self.sizes, self.counts))

    def window(self, lo, hi):
        i = np.searchsorted(self.sizes, lo, side="left")
        j = np.searchsorted(self.sizes, hi, side="right")
        return self._cum_n[j] - self._cum_n[i], self._cum_t[j] - self._cum_t[i]

    @classmethod
    def union(cls, indexes):
        triples = []
        for ix in indexes:
            triples.extend(zip(ix.sizes.tolist(), ix.means.tolist(), ix.counts.tolist()))
        return cls(triples)


def as_index(points) -> PointIndex:
    """Accept a PointIndex, SmoothedPointSet, or iterable of (size, time[, count])."""
    if isinstance(points, PointIndex):
        return points
    if isinstance(points, SmoothedPointSet):
        return PointIndex(points.points())
    triples = []
    for p in points:
        if len(p) == 2:
            triples.append((p[0], p[1], 1))
        else:
            triples.append(tuple(p))
    return PointIndex(triples)


def nn_predict(points, x, policy: DeltaPolicy = DeltaPolicy()) -> Optional[float]:
    """Count-weighted mean time of the points whose size lies within delta(x) of x."""
    ix = as_index(points)
    if len(ix) == 0:
        return None
    d = policy.delta(x)
    n, t = ix.window(x - d, x + d)
    if n <= 0:
        return None
    return t / n


@dataclass(frozen=True)
class FitModel:
    a: float
    b: float
    c: float
    r2: float
    sse: float = 0.0

    def predict(self, x):
        return max(0.0, self.a + self.b * float(x) ** self.c)

    def predict_many(self, xs):
        xs = np.asarray(xs, dtype=float)
        return np.maximum(0.0, self.a + self.b * xs ** self.c)

    def sse_on(self, points) -> float:
        ix = as_index(points)
        if len(ix) == 0:
            return 0.0
        r = ix.means - self.predict_many(ix.sizes)
        return float(np.dot(ix.counts, r * r))


def _solve_linear(u_c, y, w):
    """Weighted least squares of y ~ a + b*u_c; returns (a, b, sse)."""
    sw = w.sum()
    sx = np.dot(w, u_c)
    sy = np.dot(w, y)
    sxx = np.dot(w, u_c * u_c)
    sxy = np.dot(w, u_c * y)
    det = sw * sxx - sx * sx
    if det <= 1e-12 * max(sw * sxx, 1e-300):
        a, b = sy / sw, 0.0
    else:
        b = (sw * sxy - sx * sy) / det
        a = (sy - b * sx) / sw
    r = y - a - b * u_c
    return a, b, float(np.dot(w, r * r))


def _sse_scan(u, y, w, cs):
    """Vectorised profile SSE for every exponent in ``cs``."""
    U = u[None, :] ** cs[:, None]
    sw = w.sum()
    sx = U @ w
    sy = np.dot(w, y)
    sxx = (U * U) @ w
    sxy = U @ (w * y)
    syy = np.dot(w, y * y)
    det = sw * sxx - sx * sx
    ok = det > 1e-12 * np.maximum(sw * sxx, 1e-300)
    b = np.where(ok, (sw * sxy - sx * sy) / np.where(ok, det, 1.0), 0.0)
    a = np.where(ok, (sy - b * sx) / sw, sy / sw)
    # expanded SSE; recomputed exactly for the winner
    sse = syy - 2 * a * sy - 2 * b * sxy + a * a * sw + 2 * a * b * sx + b * b * sxx
    return np.maximum(sse, 0.0)


def _loglog_slope(x, y):
    ymin = y.min()
    mask = (x > 0) & (y - ymin > 0)
    if mask.sum() < 2:
        return 1.0
    lx, ly = np.log(x[mask]), np.log(y[mask] - ymin)
    if np.ptp(lx) == 0:
        return 1.0
    slope = np.polyfit(lx, ly, 1)[0]
    return float(min(max(slope, C_MIN), C_MAX))


def fit_power(points) -> Optional[FitModel]:
    """Least-squares fit of ``a + b * x**c`` (c clamped to [0, 6]) with R^2.

    For a fixed exponent the model is linear in (a, b), so the exponent is
    searched on a 1-D profile SSE: a dense scan seeded by the log-log slope,
    then golden-section refinement. Points weigh by their merge count.
    """
    ix = as_index(points)
    if len(np.unique(ix.sizes)) < 3 or ix.total_count < 3:
        return None
    x, y, w = ix.sizes, ix.means, ix.counts
    xmax = x.max()
    if xmax <= 0:
        return None
    u = x / xmax

    c0 = _loglog_slope(x, y)
    cs = np.unique(np.concatenate((np.arange(C_MIN, C_MAX + 1e-12, _SCAN_STEP), [c0])))
    scan = _sse_scan(u, y, w, cs)
    k = int(np.argmin(scan))
    lo = cs[max(k - 1, 0)]
    hi = cs[min(k + 1, len(cs) - 1)]

    def sse_at(c):
        return _solve_linear(u ** c, y, w)[2]

    best_c, best_sse = cs[k], sse_at(cs[k])
    g = (math.sqrt(5) - 1) / 2
    p, q = hi - g * (hi - lo), lo + g * (hi - lo)
    fp, fq = sse_at(p), sse_at(q)
    prev = min(fp, fq)
    for _ in range(_MAX_ITER):
        if fp <= fq:
            hi, q, fq = q, p, fp
            p = hi - g * (hi - lo)
            fp = sse_at(p)
        else:
            lo, p, fp = p, q, fq
            q = lo + g * (hi - lo)
            fq = sse_at(q)
        cur = min(fp, fq)
        if abs(prev - cur) <= _REL_TOL * max(prev, 1e-300) and hi - lo < 1e-9:
            break
        prev = cur
    for c in (p, q):
        s = sse_at(c)
        if s < best_sse:
            best_c, best_sse = c, s

    a, b_scaled, sse = _solve_linear(u ** best_c, y, w)
    b = b_scaled / xmax ** best_c
    ybar = np.dot(w, y) / w.sum()
    sst = float(np.dot(w, (y - ybar) ** 2))
    if sst <= 1e-12 * max(np.dot(w, y * y), 1e-300):
        r2 = 1.0 if sse <= 1e-9 * max(np.dot(w, y * y), 1.0) else 0.0
    else:
        r2 = 1.0 - sse / sst
    return FitModel(float(a), float(b), float(best_c), float(r2), float(sse))


class Combiner:
    """The four-step NearestFit predictor over one snapshot of profile data.

    ``globals_`` holds (points, fit) for the *other* reduce tasks. Step 3
    searches the union of local and global points; step 4 uses the other
    task's fit with the least squared error on the local points, or the
    highest R^2 when there are no local points.
    """

    def __init__(self, local, local_fit, globals_, policy=DeltaPolicy(), r2_threshold=0.9,
                 union=None):
        self.local = as_index(local)
        self.local_fit = local_fit
        self.policy = policy
        self.r2_threshold = r2_threshold
        self.globals_ = [(as_index(p), f) for p, f in globals_]
        self._union = union
        self._best_global = None
        self._best_done = False

    @property
    def union(self):
        if self._union is None:
            self._union = PointIndex.union([self.local] + [p for p, _ in self.globals_])
        return self._union

    @property
    def best_global_fit(self):
        if not self._best_done:
            fits = [f for _, f in self.globals_ if f is not None]
            if fits:
                if len(self.local) == 0:
                    self._best_global = max(fits, key=lambda f: f.r2)
                else:
                    self._best_global = min(fits, key=lambda f: f.sse_on(self.local))
            self._best_done = True
        return self._best_global

    def select(self, x):
        """(step, predicted ms) for input size ``x``; raises NoPrediction."""
        v = nn_predict(self.local, x, self.policy)
        if v is not None:
            return STEP_LOCAL_NN, v
        if self.local_fit is not None and self.local_fit.r2 >= self.r2_threshold:
            return STEP_LOCAL_FIT, self.local_fit.predict(x)
        v = nn_predict(self.union, x, self.policy)
        if v is not None:
            return STEP_GLOBAL_NN, v
        best = self.best_global_fit
        if best is not None:
            return STEP_GLOBAL_FIT, best.predict(x)
        raise NoPrediction(f"no neighbour or model for size {x}")


def select_prediction(local, local_fit, globals_, x, policy=DeltaPolicy(), r2_threshold=0.9):
    """Run the four-step combiner once; returns (step, predicted ms)."""
    return Combiner(local, local_fit, globals_, policy, r2_threshold).select(x)


def combined_predict(local, local_fit, globals_, x, policy=DeltaPolicy(), r2_threshold=0.9):
    return select_prediction(local, local_fit, globals_, x, policy, r2_threshold)[1]


def linear_rate(indexes) -> Optional[float]:
    """Global ms-per-byte rate over all profile points, or None with no data."""
    t = sum(ix.total_time for ix in indexes)
    b = sum(ix.total_bytes for ix in indexes)
    if b <= 0:
        return None
    return t / b
