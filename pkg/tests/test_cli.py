import json

from ppls import cli
from ppls.harness import scenario


def test_demo_exits_zero(capsys):
    assert cli.main(["demo"]) == 0
    out = capsys.readouterr().out
    assert "0x01 Registration" in out and "all checks passed" in out


def test_demo_json(capsys):
    assert cli.main(["demo", "--json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] is True
    assert {"queries", "audits", "frames", "seed"} <= set(report)


def test_demo_nonzero_when_audit_fails(monkeypatch, capsys):
    real = scenario.run_scenario

    def leaky(cfg, backend="inproc"):
        report = real(cfg, backend)
        report.audits["sns_location_blindness"].append("synthetic finding")
        return report

    monkeypatch.setattr(cli, "run_scenario", leaky)
    assert cli.main(["demo"]) == 1
    assert "CHECKS FAILED" in capsys.readouterr().out


def test_run_config(tmp_path, capsys):
    cfg = scenario.three_vehicle_fixture()
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert cli.main(["run", "--config", str(path), "--seed", "3"]) == 0
    assert "all checks passed" in capsys.readouterr().out


def test_run_invalid_config(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text('{"fleet": [{"id": "a", "location": [0, 0], "friends": {"b": 5}}]}')
    assert cli.main(["run", "--config", str(path)]) == 2
    assert "friend 'b' is not in the fleet" in capsys.readouterr().err


def test_run_missing_file(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "nope.json")]) == 2


def test_keygen(capsys):
    assert cli.main(["keygen", "--role", "vehicle", "--bits", "512", "--seed", "1"]) == 0
    key = json.loads(capsys.readouterr().out)
    n, e, d = int(key["n"], 16), key["e"], int(key["d"], 16)
    assert pow(pow(42, e, n), d, n) == 42
    assert cli.main(["keygen", "--role", "sns", "--seed", "1"]) == 0
    assert len(bytes.fromhex(json.loads(capsys.readouterr().out)["epoch_key"])) == 16


def test_bench_zero_guard(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    assert cli.main(["bench", "--n", "0", "--reps", "1", "--out", str(out)]) == 0
    assert out.read_text() == "n,total_ms_mean,total_ms_std,cmp_ms_mean,cmp_ms_std,cmp_share\n"


def test_bench_small_to_stdout(capsys):
    assert cli.main(["bench", "--n", "1,2", "--reps", "1", "--paillier-bits", "128", "--rsa-bits", "512",
                     "--imax", "100"]) == 0
    captured = capsys.readouterr()
    assert captured.out.splitlines()[0].startswith("n,total_ms_mean")
    assert "R^2" in captured.err
