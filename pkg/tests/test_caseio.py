import json

import numpy as np
import pytest

from gscsim import load_bundled, make_preset, parse_case, with_params
from gscsim.caseio import case_equal, case_from_dict, case_to_dict, serialize_case
from gscsim.netmodel import CaseError

BUNDLED = ["wscc9_vsm", "wscc9_vsm_extended", "wscc9_vsm_coupled", "wscc9_dvsm"]


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_roundtrip(tmp_path, name):
    case = load_bundled(name)
    path = tmp_path / f"{name}.case"
    path.write_text(serialize_case(case))
    back = parse_case(path)
    assert case_equal(case, back)
    assert serialize_case(back) == serialize_case(case)


def test_bundled_presets():
    kinds = {n: load_bundled(n).devices[0].params for n in BUNDLED}
    assert kinds["wscc9_dvsm"].dual and not kinds["wscc9_vsm"].dual
    assert kinds["wscc9_vsm_coupled"].D[0, 1] == kinds["wscc9_vsm_coupled"].D[1, 0] != 0
    assert kinds["wscc9_vsm_extended"].M[0, 0] > 0
    assert kinds["wscc9_vsm"].filter.L_f > 0


def test_explicit_matrices():
    doc = case_to_dict(load_bundled("wscc9_vsm"))
    doc["devices"][0]["gsc"] = {"M": [[1, 0], [0, 2]], "D": [[3, 0], [0, 4]],
                                "K": [[5, 0], [0, 0]], "power_order": "dual"}
    c = case_from_dict(doc)
    assert c.devices[0].params.dual and c.devices[0].params.M[1, 1] == 2


def _bad(tmp_path, mutate):
    doc = case_to_dict(load_bundled("wscc9_vsm"))
    mutate(doc)
    path = tmp_path / "bad.case"
    path.write_text(json.dumps(doc, indent=2))
    return path


def test_unknown_bus_has_line_number(tmp_path):
    def mutate(d):
        d["branches"][3]["to"] = 99
    with pytest.raises(CaseError, match=r"^line \d+: .*unknown bus 99"):
        parse_case(_bad(tmp_path, mutate))


def test_ill_posed_device_rejected(tmp_path):
    def mutate(d):
        d["devices"][1]["gsc"] = {"M": [[0, 0], [0, 0]], "D": [[1, 0], [0, 1]],
                                  "K": [[1, 0], [0, 0]]}
    with pytest.raises(CaseError):
        parse_case(_bad(tmp_path, mutate))


def test_missing_section(tmp_path):
    with pytest.raises(CaseError, match="loads"):
        parse_case(_bad(tmp_path, lambda d: d.pop("loads")))


def test_malformed_json(tmp_path):
    path = tmp_path / "x.case"
    path.write_text('{\n "base": {\n  "mva": 100,,\n }\n}')
    with pytest.raises(CaseError, match=r"^line 3"):
        parse_case(path)


def test_with_params_copies():
    case = load_bundled("wscc9_vsm")
    p = make_preset("vsm", M22=1, D22=2, D11=3, K11=4)
    c2 = with_params(case, p)
    assert all(d.params is p for d in c2.devices)
    assert case.devices[0].params is not p
    assert np.array_equal(c2.devices[0].params.K, np.diag([4, 0]))
