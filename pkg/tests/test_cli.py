import json

import pytest

from mrprogress.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


SMALL = ["--sigma", "1.5", "--n-max", "40", "--replicates", "1", "--prediction-points", "20"]


def test_gen_simulate_replay_pipeline(tmp_path, capsys):
    w, t, r = tmp_path / "w.csv", tmp_path / "t.json", tmp_path / "rep"
    code, out, _ = run(capsys, "gen", *SMALL, "-o", str(w))
    assert code == 0 and "keys" in out and w.exists()
    code, out, _ = run(capsys, "simulate", *SMALL, "--seed", "4", "-o", str(t),
                       "--events", str(tmp_path / "ev.csv"))
    assert code == 0 and json.loads(t.read_text())["seed"] == 4
    code, out, _ = run(capsys, "replay", *SMALL, "-t", str(t), "-o", str(r))
    assert code == 0 and "nearestfit" in out
    assert (r / "progress.svg").exists() and (r / "progress.csv").exists()


def test_report_and_sweep(tmp_path, capsys):
    code, out, _ = run(capsys, "report", *SMALL, "--indicators", "nearestfit,jobratio",
                       "-o", str(tmp_path / "rep"))
    assert code == 0 and "jobratio" in out and "hadoop" not in out
    code, out, _ = run(capsys, "sweep", "-c", "multitask", "--n-max", "40", "--replicates", "1",
                       "-o", str(tmp_path / "sw"))
    assert code == 0 and (tmp_path / "sw" / "sweep_summary.csv").exists()
    assert "job.reducers=8" in out


def test_configs_listing(capsys):
    code, out, _ = run(capsys, "configs")
    assert code == 0 and "lambda_tradeoff" in out


def test_generator_switch_drops_old_fields(tmp_path, capsys):
    code, _, err = run(capsys, "report", "--generator", "matmult", "--set",
                       "workload.block_count=4", "--reducers", "2", "--replicates", "1",
                       "-o", str(tmp_path / "mm"))
    assert code == 0, err


def exit_code(argv):
    try:
        return main(argv)
    except SystemExit as exc:  # argparse usage errors
        return exc.code


@pytest.mark.parametrize("argv,code,needle", [
    (["report", "--sigma", "0.9", "-o", "x"], 1, "workload.sigma"),
    (["simulate", "-o", "x"], 1, "--seed"),
    (["report", "--set", "nonsense", "-o", "x"], 1, "FIELD=VALUE"),
    (["sweep", "-c", "matmult_unbalanced", "-o", "x"], 1, "sweep"),
    (["replay", "-t", "does-not-exist.json", "-o", "x"], 2, "runtime error"),
])
def test_exit_codes(tmp_path, capsys, monkeypatch, argv, code, needle):
    monkeypatch.chdir(tmp_path)
    assert exit_code(argv) == code
    assert needle in capsys.readouterr().err
