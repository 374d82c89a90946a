import csv
import json
import math
import subprocess
import sys

import pytest

from soficlab.cli import config_digest, fmt, run
from soficlab.sofic import random_free_model


def invoke(tmp_path, sub, cfg=None, *extra, name="cfg.json"):
    out = tmp_path / "out"
    argv = [sub, "--out", str(out), *extra]
    if cfg is not None:
        path = tmp_path / name
        path.write_text(json.dumps(cfg))
        argv += ["--config", str(path)]
    return run(argv), out


def read_csv(out, sub):
    lines = (out / f"{sub}.csv").read_text().splitlines()
    assert lines[0].startswith("# config_digest=sha256:")
    return list(csv.DictReader(lines[1:]))


def test_finv_ising(tmp_path):
    code, out = invoke(tmp_path, "finv", {"chain": {"ising": {"eps": 0, "rank": 2}}, "windows": [["e", "a"]]})
    assert code == 0
    rows = read_csv(out, "finv")
    assert float(rows[0]["f"]) == pytest.approx(-math.log(2), abs=1e-9)
    assert rows[0]["f"] == "-0.693147181"
    assert float(rows[1]["f"]) == pytest.approx(-math.log(2), abs=1e-9)


def test_mahler_roots(tmp_path):
    code, out = invoke(tmp_path, "mahler", None, "--poly", "x^2 - x - 1", "--method", "roots")
    assert code == 0
    row = read_csv(out, "mahler")[0]
    assert round(float(row["value"]), 6) == 0.481212


def test_mahler_quadrature(tmp_path):
    code, out = invoke(tmp_path, "mahler", {"poly": "1 + x + y", "grid": 256})
    assert code == 0
    row = read_csv(out, "mahler")[0]
    assert row["method"] == "quadrature"
    assert float(row["value"]) == pytest.approx(0.3230659, abs=1e-3)


def test_sft_maxent_mod5(tmp_path):
    code, out = invoke(tmp_path, "sft-maxent", {"sft": {"mod_n": 5}})
    assert code == 0
    rows = read_csv(out, "sft-maxent")
    assert [r["alpha"] for r in rows] == ["0.1", "0.1"]
    assert round(float(rows[0]["value"]), 6) == -0.223144


def test_annealed(tmp_path):
    code, out = invoke(tmp_path, "annealed", {"chain": {"ising": {"eps": 0.25}}, "n": [8, 16]})
    assert code == 0
    assert [r["n"] for r in read_csv(out, "annealed")] == ["8", "16"]


def test_annealed_infeasible(tmp_path):
    code, _ = invoke(tmp_path, "annealed", {"chain": {"ising": {"eps": 0.25}}, "n": [7]})
    assert code == 2


def test_pressure(tmp_path):
    cfg = {"potential": {"ising": {"beta": 0.3, "field": 0.0, "rank": 1}},
           "sequence": {"kind": "cyclic", "sizes": [10, 20]}}
    code, out = invoke(tmp_path, "pressure", cfg)
    assert code == 0
    assert len(read_csv(out, "pressure")) == 2


def test_pressure_cap(tmp_path):
    cfg = {"potential": {"ising": {"beta": 0.3, "field": 0.0}},
           "sequence": {"kind": "random_free", "sizes": [30], "seed": 0}}
    code, _ = invoke(tmp_path, "pressure", cfg)
    assert code == 3


def test_microstates(tmp_path):
    cfg = {"target": {"iid": {"p": [0.5, 0.5], "rank": 1}},
           "sequence": {"kind": "cyclic", "sizes": [8]}, "schedule": [[1, 0.2]]}
    code, out = invoke(tmp_path, "microstates", cfg)
    assert code == 0
    row = read_csv(out, "microstates")[0]
    assert row["method"] == "exact" and row["n"] == "8"


def test_microstates_cap(tmp_path):
    cfg = {"target": {"iid": {"p": [0.5, 0.5], "rank": 1}},
           "sequence": {"kind": "cyclic", "sizes": [30]}, "schedule": [[1, 0.2]]}
    code, _ = invoke(tmp_path, "microstates", cfg, "--cap", "10")
    assert code == 3


def test_sofic_check_with_saved_model(tmp_path):
    random_free_model(2, 40, 3).save(tmp_path / "model.json")
    code, out = invoke(tmp_path, "sofic-check", {"model": {"path": "model.json"}, "radius": 1})
    assert code == 0
    vals = {r["quantity"]: r["value"] for r in read_csv(out, "sofic-check")}
    assert vals["trace_passed"] in ("true", "false")
    assert -1 <= float(vals["lambda2"]) <= 1


@pytest.mark.parametrize("variant,hist", [(False, {"128": 1024}), (True, {"16": 32})])
def test_ow_check(tmp_path, variant, hist):
    code, out = invoke(tmp_path, "ow-check", {"radius": 1, "variant": variant})
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["fiber_histogram"] == hist and report["uniform"]
    assert report["kind"] == "window-level evidence"


def test_schema_error_pointer(tmp_path, capsys):
    code, _ = invoke(tmp_path, "finv", {"chain": {"ising": {"eps": 2}}})
    assert code == 1
    assert "/chain/ising/eps: 2 is greater than the maximum of 1" in capsys.readouterr().err


def test_schema_unknown_key(tmp_path, capsys):
    code, _ = invoke(tmp_path, "sft-maxent", {"sft": {"mod_n": 5}, "bogus": 1})
    assert code == 1
    assert "/:" in capsys.readouterr().err


def test_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert run(["finv", "--config", str(path), "--out", str(tmp_path)]) == 1


def test_bad_flags(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(["finv", "--threads", "x"])
    assert exc.value.code == 1
    assert run(["mahler", "--poly", "x - 2", "--seed", "-1", "--out", str(tmp_path)]) == 1
    assert run(["mahler", "--poly", "x/2", "--out", str(tmp_path)]) == 1


def test_manifest_and_digest(tmp_path):
    cfg = {"radius": 0}
    code, out = invoke(tmp_path, "ow-check", cfg, "--seed", "7")
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    digest = config_digest("ow-check", cfg)
    assert manifest["config_digest"] == digest and manifest["seed"] == 7
    assert set(manifest) == {"subcommand", "config_digest", "seed", "version", "wall_time_s", "outputs"}
    for name in manifest["outputs"]:
        assert digest in (out / name).read_text()


def test_determinism(tmp_path):
    cfg = {"target": {"iid": {"p": [0.5, 0.5], "rank": 2}},
           "sequence": {"kind": "random_free", "sizes": [12], "seed": 1},
           "schedule": [[1, 0.3]], "method": "mc", "samples": 2000}
    outputs = []
    for i, threads in enumerate(["1", "3", "1"]):
        (tmp_path / str(i)).mkdir()
        code, out = invoke(tmp_path / str(i), "microstates", cfg, "--seed", "11", "--threads", threads)
        assert code == 0
        outputs.append((out / "microstates.csv").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_fmt():
    assert fmt(1 / 3) == "0.333333333"
    assert fmt(True) == "true" and fmt(None) == "" and fmt(5) == "5"


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "soficlab", "mahler", "--poly", "x - 2", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "0.693147181" in res.stdout
