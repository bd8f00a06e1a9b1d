"""Reading and writing ``.case`` files (JSON documents).

See ``docs/case_format.md`` for the field reference.
"""
from __future__ import annotations

import json
import re
from importlib import resources
from pathlib import Path

from .gsc import FilterParams, GscParams, IllPosedError, make_preset
from .netmodel import Branch, Bus, CaseError, Device, Load, NetworkCase


def _line_of(text, pattern):
    if text is None:
        return None
    m = re.search(pattern, text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _fail(msg, text=None, pattern=None):
    line = _line_of(text, pattern) if pattern else None
    raise CaseError(f"line {line}: {msg}" if line else msg)


def parse_gsc(spec: dict) -> GscParams:
    flt = FilterParams(**spec["filter"]) if "filter" in spec else FilterParams()
    if "preset" in spec:
        p = make_preset(spec["preset"], spec.get("values", {}))
    else:
        p = GscParams(spec["M"], spec["D"], spec["K"], power_order=spec.get("power_order", "normal"))
    p.filter = flt
    return p


def case_from_dict(doc: dict, text: str | None = None, name: str = "case") -> NetworkCase:
    for section in ("buses", "branches", "loads", "devices", "base"):
        if section not in doc:
            _fail(f"missing section {section!r}")
    base = doc["base"]
    buses = []
    for i, b in enumerate(doc["buses"]):
        try:
            buses.append(Bus(int(b["id"]), float(b.get("kv", 1.0)), b.get("type", "transit")))
        except (KeyError, TypeError, ValueError) as exc:
            _fail(f"buses[{i}]: {exc}", text, r'"buses"')
    known = {b.id for b in buses}
    branches = []
    for i, br in enumerate(doc["branches"]):
        bid = str(br.get("id", f"{br.get('from')}-{br.get('to')}"))
        pat = rf'"id"\s*:\s*"?{re.escape(bid)}"?'
        for end in ("from", "to"):
            if br.get(end) not in known:
                _fail(f"branch {bid!r}: unknown bus {br.get(end)}", text, pat)
        branches.append(Branch(bid, int(br["from"]), int(br["to"]), float(br.get("r", 0.0)),
                               float(br.get("x", 0.0)), float(br.get("b", 0.0)),
                               float(br.get("tap", 1.0))))
    loads = []
    for i, ld in enumerate(doc["loads"]):
        if ld.get("bus") not in known:
            _fail(f"loads[{i}]: unknown bus {ld.get('bus')}", text, rf'"bus"\s*:\s*{ld.get("bus")}\b')
        loads.append(Load(int(ld["bus"]), float(ld.get("p", 0.0)), float(ld.get("q", 0.0))))
    devices = []
    for i, d in enumerate(doc["devices"]):
        nm = d.get("name", f"G{i + 1}")
        pat = rf'"name"\s*:\s*"{re.escape(nm)}"'
        if d.get("bus") not in known:
            _fail(f"device {nm!r}: unknown bus {d.get('bus')}", text, pat)
        try:
            params = parse_gsc(d["gsc"]) if "gsc" in d else None
        except (IllPosedError, ValueError, KeyError) as exc:
            _fail(f"device {nm!r}: {exc}", text, pat)
        devices.append(Device(nm, int(d["bus"]), float(d.get("sb", 1.0)), float(d.get("p", 0.0)),
                              float(d.get("v", 1.0)), params, float(d.get("h", 1.0))))
    try:
        return NetworkCase(buses, branches, loads, devices, float(base.get("mva", 100.0)),
                           float(base.get("fn", 60.0)), doc.get("name", name))
    except CaseError as exc:
        _fail(str(exc))


def parse_case(path) -> NetworkCase:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"line {exc.lineno}: {exc.msg}") from None
    return case_from_dict(doc, text, path.stem)


def load_bundled(name: str) -> NetworkCase:
    """Parse one of the case files shipped in ``gscsim/data``."""
    fname = name if name.endswith(".case") else f"{name}.case"
    ref = resources.files("gscsim").joinpath("data", fname)
    text = ref.read_text(encoding="utf-8")
    return case_from_dict(json.loads(text), text, fname[:-5])


def gsc_to_dict(p: GscParams) -> dict:
    if p.preset is not None and p.values is not None:
        out = {"preset": p.preset, "values": dict(p.values)}
    else:
        out = {"M": p.M.tolist(), "D": p.D.tolist(), "K": p.K.tolist(),
               "power_order": p.power_order}
    out["filter"] = {"L_f": p.filter.L_f, "R_f": p.filter.R_f, "C_f": p.filter.C_f}
    return out


def case_to_dict(case: NetworkCase) -> dict:
    return {
        "name": case.name,
        "base": {"mva": case.base_mva, "fn": case.fn},
        "buses": [{"id": b.id, "kv": b.kv, "type": b.type} for b in case.buses],
        "branches": [{"id": br.id, "from": br.from_bus, "to": br.to_bus, "r": br.r, "x": br.x,
                      "b": br.b, "tap": br.tap} for br in case.branches],
        "loads": [{"bus": ld.bus, "p": ld.p, "q": ld.q} for ld in case.loads],
        "devices": [dict({"name": d.name, "bus": d.bus, "sb": d.sb, "p": d.p, "v": d.v, "h": d.h},
                         **({"gsc": gsc_to_dict(d.params)} if d.params is not None else {}))
                    for d in case.devices],
    }


def serialize_case(case: NetworkCase) -> str:
    return json.dumps(case_to_dict(case), indent=2)


def case_equal(a: NetworkCase, b: NetworkCase) -> bool:
    if case_to_dict(a) != case_to_dict(b):
        return False
    for da, db in zip(a.devices, b.devices):
        if (da.params is None) != (db.params is None):
            return False
        if da.params is not None and not (da.params.same_matrices(db.params)
                                          and da.params.power_order == db.params.power_order):
            return False
    return True


def with_params(case: NetworkCase, params) -> NetworkCase:
    """Copy of ``case`` with the given GscParams assigned per device (or one for all)."""
    if isinstance(params, GscParams):
        params = [params] * len(case.devices)
    devs = [Device(d.name, d.bus, d.sb, d.p, d.v, p, d.h) for d, p in zip(case.devices, params)]
    return NetworkCase(case.buses, case.branches, case.loads, devs, case.base_mva, case.fn, case.name)


__all__ = ["parse_case", "load_bundled", "serialize_case", "case_from_dict", "case_to_dict",
           "case_equal", "with_params", "parse_gsc", "gsc_to_dict"]
