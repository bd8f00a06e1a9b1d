import csv
import json
import math

import numpy as np
import pytest

from gscsim import load_bundled, make_preset
from gscsim.cases import isolated_device_case
from gscsim.mc import (McRealization, SweepSpec, bin_rates, decade_rate, log_uniform,
                       run_campaign, run_realization, sample_params, summarize, top_configs,
                       worker_count, write_outputs)


def _boundary():
    # fast root of M11 l^2 + 10 l + wb = 0 equals -100
    wb = 2 * math.pi * 60
    return (1000.0 - wb) / 1e4


def _iso_spec(n, **kw):
    base = dict(preset="vsm_extended", params=["M11"], lo=0.01, hi=1.0, n=n, seed=7,
                fixed=dict(D11=10, K11=1, M22=1, D22=10, K22=1), event_bus=1,
                event_dp=0.1, event_dq=0.1, tf=5.0, h=0.005)
    base.update(kw)
    return SweepSpec(**base)


def _iso_case():
    return isolated_device_case(make_preset("vsm_extended", M22=1, D22=10, D11=10, K11=1, M11=1,
                                            K22=1))


def test_spec_defaults_and_validation():
    s = SweepSpec()
    assert s.params == ["M22", "D22", "D11", "K11"] and s.n == 2000
    with pytest.raises(ValueError):
        SweepSpec(preset="nope")
    with pytest.raises(ValueError):
        SweepSpec(lo=1.0, hi=0.5)
    with pytest.raises(ValueError):
        SweepSpec(preset="vsm_extended", params=["M22"])
    with pytest.raises(ValueError):
        SweepSpec(tie_groups=[["K11", "K22"]])
    with pytest.raises(ValueError):
        SweepSpec.from_dict({"n": 3, "colour": "red"})


def test_spec_roundtrip(tmp_path):
    s = SweepSpec(n=10, seed=3, tie_groups=[["D11", "D22"]])
    path = tmp_path / "c.json"
    path.write_text(json.dumps(s.to_dict()))
    assert SweepSpec.load(path) == s


def test_log_uniform_map():
    assert log_uniform(0.0, 0.01, 100) == pytest.approx(0.01)
    assert log_uniform(1.0, 0.01, 100) == pytest.approx(100)
    assert log_uniform(0.5, 0.01, 100) == pytest.approx(1.0)


def test_sampling_is_counter_based():
    s = SweepSpec(n=100, seed=11)
    assert sample_params(s, 42) == sample_params(s, 42)
    assert sample_params(s, 42) != sample_params(s, 43)
    # other parameters do not shift a parameter's stream
    s2 = SweepSpec(n=100, seed=11, params=["K11", "D11", "M22", "D22"])
    assert sample_params(s, 5)[0]["K11"] == sample_params(s2, 5)[0]["K11"]


def test_sampling_distribution():
    s = SweepSpec(n=4000, seed=1)
    x = np.log10([sample_params(s, i)[0]["D22"] for i in range(4000)])
    counts = np.histogram(x, bins=4, range=(-2, 2))[0]
    assert np.all(np.abs(counts - 1000) < 4 * math.sqrt(1000))
    signs = [sample_params(s, i)[1] for i in range(4000)]
    assert abs(np.mean(signs)) < 0.1


def test_tie_groups_share_value():
    s = SweepSpec(n=5, tie_groups=[["D11", "D22"]])
    v, _ = sample_params(s, 3)
    assert v["D11"] == v["D22"]


def test_fixed_sign():
    s = SweepSpec(n=5, random_sign=False)
    assert all(sample_params(s, i)[1] == 1.0 for i in range(5))
    assert s.event(-1.0).dp == -0.5


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("GSCSIM_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("GSCSIM_WORKERS", "0")
    with pytest.raises(ValueError):
        worker_count()


def test_failure_classified_unstable():
    spec = SweepSpec(n=1, seed=0, preset="vsm", lo=1e-4, hi=1e-3)
    r = run_realization(load_bundled("wscc9_vsm"), spec, 0)
    assert not r.stable and r.verdict["reason"] and r.metric is None


def test_single_stable_realization():
    # narrow range around the bundled parameters
    spec = SweepSpec(n=1, seed=0, params=["D11"], lo=99.0, hi=101.0,
                     fixed=dict(M22=10, D22=50, K11=10))
    r = run_realization(load_bundled("wscc9_vsm"), spec, 0)
    assert r.stable, r.verdict
    assert r.metric["mu_ts"] > 0 and math.isfinite(r.mu_ts)


def test_monotone_speed_boundary():
    spec = _iso_spec(40)
    res = run_campaign(_iso_case(), spec, workers=1)
    b = _boundary()
    for r in res:
        m = r.values["M11"]
        if abs(m - b) / b < 0.02:
            continue
        assert r.stable == (m > b), (m, r.verdict)
    rates = bin_rates(res, "M11", 4, spec.lo, spec.hi)
    filled = [x.rate for x in rates if x.count]
    assert filled == sorted(filled, reverse=True)


def test_worker_invariance():
    spec = _iso_spec(30)
    a = run_campaign(_iso_case(), spec, workers=1, chunk=7)
    b = run_campaign(_iso_case(), spec, workers=2, chunk=4)
    assert [r.key() for r in a] == [r.key() for r in b]
    assert [r.index for r in a] == list(range(30))


def _fake(i, x, stable, mu=None):
    return McRealization(i, {"K11": x}, 1.0, {"stable": stable},
                         {"mu_ts": mu} if mu is not None else None)


def test_rates_and_top():
    res = [_fake(0, 0.02, False), _fake(1, 0.05, False), _fake(2, 20.0, True, 3.0),
           _fake(3, 50.0, True, 1.0), _fake(4, 30.0, False)]
    assert decade_rate(res, "K11", 0.01, 0.1) == 1.0
    assert decade_rate(res, "K11", 10, 100) == pytest.approx(1 / 3)
    assert math.isnan(decade_rate(res, "K11", 1, 10))
    bins = bin_rates(res, "K11", 4, 0.01, 100)
    assert [b.count for b in bins] == [2, 0, 0, 3] and math.isnan(bins[1].rate)
    assert [r.index for r in top_configs(res, 5)] == [3, 2]
    with pytest.raises(KeyError):
        bin_rates(res, "D22")


def test_top_empty_warns():
    with pytest.warns(RuntimeWarning):
        assert top_configs([_fake(0, 1.0, False)]) == []


def test_write_outputs(tmp_path):
    spec = SweepSpec(n=3, params=["K11"], fixed=dict(M22=1, D22=1, D11=1))
    res = [_fake(0, 0.02, False), _fake(1, 20.0, True, 3.0), _fake(2, 50.0, True, 1.0)]
    summary = summarize(res, spec, n_bins=4)
    files = write_outputs(res, summary, spec, tmp_path)
    assert {f.name for f in files} == {"realizations.csv", "rates_K11.csv", "top.json"}
    rows = list(csv.DictReader(open(tmp_path / "realizations.csv")))
    assert len(rows) == 3 and rows[1]["stable"] == "True"
    assert json.loads((tmp_path / "top.json").read_text())[0]["index"] == 2
    assert summary.to_dict()["unstable"] == 1
