from __future__ import annotations

import json
from pathlib import Path

import pytest

from arwsim.cli import main
from arwsim.io import config_hash, load_config, read_csv, write_csv


def _run(tmp_path: Path, *argv: str) -> tuple[int, Path]:
    out = tmp_path / "out"
    code = main([*argv, "--out", str(out)])
    return code, out


def _only_csv(out: Path) -> Path:
    files = sorted(out.glob("*.csv"))
    assert len(files) == 1
    return files[0]


def test_sample_writes_csv_sidecar_manifest(tmp_path):
    code, out = _run(tmp_path, "sample", "--chain", "ball:d=1,r=3", "--lambda", "1", "--seed", "7",
                     "--samples", "1000")
    assert code == 0
    csv_path = _only_csv(out)
    rows = read_csv(csv_path)
    assert sum(int(r["count"]) for r in rows) == 1000
    assert set(rows[0]) == {"state", "count", "frequency"}
    assert csv_path.read_bytes().count(b"\r\n") == len(rows) + 1
    stem = csv_path.name[:-4]
    side = json.loads((out / f"{stem}.json").read_text())
    man = json.loads((out / f"{stem}.manifest.json").read_text())
    assert side["config"]["seed"] == 7
    assert man["seed"] == 7 and csv_path.name in man["outputs"]


def test_every_output_has_a_manifest(tmp_path):
    for argv in (["run-arw", "--seed", "1", "--steps", "5"], ["budget"], ["run-idla", "--seed", "2"]):
        assert _run(tmp_path, *argv)[0] == 0
    out = tmp_path / "out"
    manifests = [json.loads(p.read_text()) for p in out.glob("*.manifest.json")]
    listed = {name for m in manifests for name in m["outputs"]}
    produced = {p.name for p in out.iterdir() if not p.name.endswith(".manifest.json")}
    assert produced == listed


def test_seed_is_mandatory(tmp_path):
    assert _run(tmp_path, "sample")[0] == 1
    assert not (tmp_path / "out").exists()


def test_validation_errors(tmp_path):
    assert _run(tmp_path, "sample", "--seed", "1", "--chain", "nope:x=1")[0] == 1
    assert _run(tmp_path, "sample", "--seed", "1", "--bogus")[0] == 1
    assert _run(tmp_path, "sample", "--seed", "1", "--lambda", "missing.txt")[0] == 1
    assert _run(tmp_path, "nosuch")[0] == 1
    assert main([]) == 1


def test_check_abelian(tmp_path, capsys):
    code, out = _run(tmp_path, "check-abelian", "--trials", "1000", "--seed", "1")
    assert code == 0
    assert "1000/1000 exact matches" in capsys.readouterr().out


def test_fill_tail_cli(tmp_path):
    code, out = _run(tmp_path, "fill-tail", "--chain", "ball:d=2,r=8", "--driving", "uniform",
                     "--alpha", "0.8333", "--trials", "40", "--seed", "3")
    assert code == 0
    row = read_csv(_only_csv(out))[0]
    assert row["trials"] == "40" and 0 <= float(row["ci_low"]) <= float(row["ci_high"]) <= 1


def test_lambda_file_and_driving_file(tmp_path):
    lam = tmp_path / "lam.txt"
    lam.write_text("0 1 inf\n")
    seq = tmp_path / "drive.txt"
    seq.write_text("0 1 2 1")
    code, out = _run(tmp_path, "run-arw", "--chain", "interval:r=2", "--lambda", str(lam),
                     "--driving", f"file:{seq}", "--steps", "8", "--seed", "5")
    assert code == 0
    rows = read_csv(_only_csv(out))
    assert [int(r["u"]) for r in rows] == [0, 1, 2, 1, 0, 1, 2, 1]
    assert all(r["config"][0] == "." for r in rows)
    assert all(r["config"][2] == "s" for r in rows[2:])
    bad = tmp_path / "bad.txt"
    bad.write_text("1 1")
    assert main(["sample", "--seed", "1", "--lambda", str(bad), "--out", str(tmp_path / "x")]) == 1


@pytest.mark.parametrize("suffix", [".json", ".toml"])
def test_config_file(tmp_path, suffix):
    cfg = tmp_path / f"cfg{suffix}"
    if suffix == ".json":
        cfg.write_text(json.dumps({"chain": "interval:r=3", "lambda": "2", "seed": 11, "samples": 300}))
    else:
        cfg.write_text('chain = "interval:r=3"\nlambda = "2"\nseed = 11\nsamples = 300\n')
    code, out = _run(tmp_path, "sample", "--config", str(cfg))
    assert code == 0
    assert sum(int(r["count"]) for r in read_csv(_only_csv(out))) == 300
    assert load_config(cfg)["seed"] == 11
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert main(["sample", "--config", str(bad), "--out", str(tmp_path / "y")]) == 1


def test_cli_flag_overrides_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1, "samples": 100}))
    code, out = _run(tmp_path, "sample", "--config", str(cfg), "--samples", "50")
    assert code == 0
    assert sum(int(r["count"]) for r in read_csv(_only_csv(out))) == 50


def test_sst_and_harmonic_exit_codes(tmp_path):
    assert _run(tmp_path, "sst-check", "--seed", "2", "--samples", "20000")[0] == 0
    assert _run(tmp_path, "sst-check", "--seed", "2", "--samples", "20000", "--max-tv", "0")[0] == 2
    assert _run(tmp_path, "harmonic", "--chain", "ball:d=2,r=5", "--walks", "20000", "--seed", "1")[0] == 0


def test_budget_values(tmp_path):
    code, out = _run(tmp_path, "budget", "--d", "2", "--n", "10", "--eps", "0.01")
    row = read_csv(_only_csv(out))[0]
    assert (row["budget"], row["coupon"]) == ("166", "922")


def test_csv_and_hash_helpers(tmp_path):
    p = write_csv(tmp_path / "a.csv", ["x", "y"], [{"x": "a,b", "y": 0.1}, {"x": 'q"t', "y": True}])
    assert p.read_bytes() == b'x,y\r\n"a,b",0.1\r\n"q""t",true\r\n'
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
