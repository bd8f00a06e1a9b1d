import json
import subprocess
import sys

import numpy as np
import pytest

from gscsim.cli import main


def _run(tmp_path, *argv):
    code = main([*argv, "--out", str(tmp_path)])
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["exit_code"] == code and man["command"] == argv[0]
    return code, man


def test_pf(tmp_path, capsys):
    code, man = _run(tmp_path, "pf", "wscc9_vsm")
    assert code == 0
    out = json.loads((tmp_path / "powerflow.json").read_text())
    assert out["mismatch"] < 1e-10 and len(out["buses"]) == 9
    assert man["backend"] in ("numba", "numpy")
    assert json.loads(capsys.readouterr().out)["iterations"] >= 1


def test_pf_file_input_hashed(tmp_path):
    from gscsim import load_bundled
    from gscsim.caseio import serialize_case
    path = tmp_path / "c.case"
    path.write_text(serialize_case(load_bundled("wscc9_vsm")))
    code, man = _run(tmp_path / "out", "pf", str(path))
    assert code == 0 and len(man["inputs"][str(path)]) == 64


def test_sim_check_and_metric(tmp_path):
    code, _ = _run(tmp_path, "sim", "wscc9_vsm", "--tf", "10", "--event",
                   "bus=5,dp=0.5,dq=0.5,t=1", "--check")
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["verdict"]["stable"]
    code, _ = _run(tmp_path, "metric", str(tmp_path / "trajectory.csv"), "--case", "wscc9_vsm",
                   "--t-start", "1")
    assert code == 0
    out = json.loads((tmp_path / "metric.json").read_text())
    assert out["mu"]["mu_ts"] > 0
    assert all(abs(e["closure_error"]) < 1e-8 for e in out["energy"].values())
    coi = np.loadtxt(tmp_path / "coi.csv", delimiter=",", skiprows=1)
    assert coi.shape[1] == 2


def test_ssa_stable(tmp_path):
    code, _ = _run(tmp_path, "ssa", "wscc9_vsm", "--tf", "20", "--event",
                   "bus=5,dp=0.5,dq=0.5,t=1", "--check")
    out = json.loads((tmp_path / "ssa.json").read_text())
    assert code == 0 and out["verdict"]["stable"]
    assert all(re < 0 for re, _ in out["eigenvalues"])


def test_unstable_exit_code(tmp_path):
    from gscsim import load_bundled, make_preset, with_params
    from gscsim.caseio import serialize_case
    path = tmp_path / "weak.case"
    path.write_text(serialize_case(with_params(load_bundled("wscc9_vsm"),
                                               make_preset("vsm", M22=10, D22=50, D11=100,
                                                           K11=0.05))))
    code, _ = _run(tmp_path, "sim", str(path), "--event", "bus=5,dp=0.5,dq=0.5,t=1", "--check")
    assert code == 4


def test_qep(tmp_path):
    code, _ = _run(tmp_path, "qep", "--M", "1,0,0,1", "--D", "1,0,0,1", "--K", "1,0,0,1")
    out = json.loads((tmp_path / "qep.json").read_text())
    assert code == 0 and np.allclose(list(out["coefficients"].values()), [1, 2, 3, 2, 1])


def test_qep_preset(tmp_path):
    code, _ = _run(tmp_path, "qep", "--preset", "vsm", "--values", "M22=10,D22=50,D11=10,K11=20")
    assert code == 0
    assert json.loads((tmp_path / "qep.json").read_text())["degree"] == 3


@pytest.mark.parametrize("argv", [
    ("pf", "no_such_case"),
    ("qep", "--M", "1,2,3"),
    ("sim", "wscc9_vsm", "--event", "bus=42,dp=1,t=1"),
    ("mc", "wscc9_vsm", "--n", "0"),
])
def test_invalid_input_exit_2(tmp_path, argv):
    assert _run(tmp_path, *argv)[0] == 2


def test_pf_nonconvergence_exit_3(tmp_path):
    from gscsim import load_bundled
    from gscsim.caseio import case_to_dict
    doc = case_to_dict(load_bundled("wscc9_vsm"))
    doc["loads"][0]["p"] = 8.0
    path = tmp_path / "heavy.case"
    path.write_text(json.dumps(doc))
    assert _run(tmp_path, "pf", str(path))[0] == 3


def test_mc_small(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"params": ["D11"], "lo": 90, "hi": 110, "n": 3, "seed": 2,
                                "fixed": {"M22": 10, "D22": 50, "K11": 10}, "tf": 5.0}))
    code, man = _run(tmp_path, "mc", "wscc9_vsm", "--spec", str(spec), "--workers", "1",
                     "--quiet", "--bins", "2")
    assert code == 0 and man["seed"] == 2
    assert (tmp_path / "rates_D11.csv").exists() and (tmp_path / "top.json").exists()
    assert man["options"]["campaign"]["n"] == 3


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "gscsim.cli", "--version"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and "gscsim" in r.stdout
