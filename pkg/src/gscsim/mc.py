"""Monte Carlo sensitivity campaigns over GSC parameters."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import sys
import time
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .caseio import with_params
from .gsc import _REQUIRED, make_preset
from .metrics import MetricWeights, OperatingPoints, mu_ts
from .netmodel import LoadStep, NetworkCase, solve_powerflow
from .ssa import StabilityThresholds, classify_stability, linearize
from .tds import SimOptions, find_equilibrium, initialize, simulate

logger = logging.getLogger(__name__)

WORKERS_ENV = "GSCSIM_WORKERS"


@dataclass
class SweepSpec:
    preset: str = "vsm"
    params: list = field(default_factory=list)       # swept names; empty = all preset scalars
    lo: float = 0.01
    hi: float = 100.0
    n: int = 2000
    seed: int = 0
    fixed: dict = field(default_factory=dict)        # values for names not swept
    tie_groups: list = field(default_factory=list)
    event_bus: int = 5
    event_dp: float = 0.5
    event_dq: float = 0.5
    event_t: float = 1.0
    random_sign: bool = True
    tf: float = 20.0
    h: float = 0.005

    def __post_init__(self):
        if self.preset not in _REQUIRED:
            raise ValueError(f"unknown preset {self.preset!r}")
        if not self.params:
            self.params = list(_REQUIRED[self.preset])
        if not 0.0 < self.lo < self.hi:
            raise ValueError("need 0 < lo < hi")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        self.tie_groups = [list(g) for g in self.tie_groups]
        for g in self.tie_groups:
            for name in g:
                if name not in self.params:
                    raise ValueError(f"tie group member {name!r} is not swept")
        missing = [k for k in _REQUIRED[self.preset]
                   if k not in self.params and k not in self.fixed and not self._aliased(k)]
        if missing:
            raise ValueError(f"preset {self.preset}: no value for {', '.join(missing)}")

    def _aliased(self, name):
        return name == "d_c" and ("D12" in self.params or "D12" in self.fixed)

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown campaign keys: {sorted(extra)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "SweepSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self):
        return asdict(self)

    def event(self, sign: float) -> LoadStep:
        return LoadStep(self.event_bus, sign * self.event_dp, sign * self.event_dq, self.event_t)


def _uniform(seed: int, index: int, name: str) -> float:
    # counter-based stream keyed on (seed, realization, parameter)
    ss = np.random.SeedSequence([seed, index, zlib.crc32(name.encode())])
    return float(np.random.Generator(np.random.Philox(ss)).random())


def log_uniform(u: float, lo: float, hi: float) -> float:
    a, b = math.log10(lo), math.log10(hi)
    return 10.0 ** (a + u * (b - a))


def sample_params(spec: SweepSpec, index: int):
    """Parameter values and event sign of realization ``index``."""
    values = {}
    leader = {}
    for g in spec.tie_groups:
        for name in g:
            leader[name] = g[0]
    for name in spec.params:
        key = leader.get(name, name)
        values[name] = log_uniform(_uniform(spec.seed, index, key), spec.lo, spec.hi)
    sign = 1.0
    if spec.random_sign:
        sign = 1.0 if _uniform(spec.seed, index, "__sign__") < 0.5 else -1.0
    return values, sign


@dataclass
class McRealization:
    index: int
    values: dict
    sign: float
    verdict: dict
    metric: dict | None = None
    runtime: float = 0.0

    @property
    def stable(self) -> bool:
        return bool(self.verdict.get("stable", False))

    @property
    def mu_ts(self) -> float:
        return self.metric["mu_ts"] if self.metric else float("nan")

    def key(self):
        """Everything except the wall-clock time, for determinism checks."""
        return (self.index, tuple(sorted(self.values.items())), self.sign,
                json.dumps(self.verdict, sort_keys=True), json.dumps(self.metric, sort_keys=True))


def run_realization(case: NetworkCase, spec: SweepSpec, index: int, pf=None,
                    weights: MetricWeights | None = None) -> McRealization:
    """Sample, simulate, linearize and classify one realization.

    Any numerical failure marks the realization unstable.
    """
    t0 = time.perf_counter()
    values, sign = sample_params(spec, index)
    vals = dict(spec.fixed)
    vals.update(values)
    verdict = {"stable": False, "converged": False, "hurwitz": False, "within_speed": False,
               "reason": ""}
    metric = None
    try:
        p = make_preset(spec.preset, vals)
        c = with_params(case, p)
        model, w0, _ = initialize(c, pf=pf)
        ev = spec.event(sign)
        opts = SimOptions(h=spec.h, tf=spec.tf)
        traj = simulate(c, event=ev, options=opts, init=(model, w0))
        if not traj.completed:
            verdict["reason"] = f"diverged: {traj.message}"
        else:
            eq = find_equilibrium(c, event=ev, init=(model, w0), guess=traj.states[-1])
            lin = linearize(model, eq.w, ev.loads_after(c))
            v = classify_stability(traj, lin.eigenvalues, StabilityThresholds(), eta_f=eq.eta)
            verdict = v.to_dict()
            if v.stable:
                metric = mu_ts(traj, weights, OperatingPoints.from_trajectory(traj, eq),
                               t_start=ev.t).table()
    except Exception as exc:  # any stage failing means no usable steady state
        verdict["reason"] = f"{type(exc).__name__}: {exc}"
    return McRealization(index, values, sign, verdict, metric, time.perf_counter() - t0)


_CTX = {}


def _init_worker(case, spec, weights):
    _CTX["case"] = case
    _CTX["spec"] = spec
    _CTX["weights"] = weights
    _CTX["pf"] = solve_powerflow(case)


def _work(indices):
    return [run_realization(_CTX["case"], _CTX["spec"], i, _CTX["pf"], _CTX["weights"])
            for i in indices]


def worker_count(default: int | None = None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1")
        return n
    return default or (os.cpu_count() or 1)


def run_campaign(case: NetworkCase, spec: SweepSpec, workers: int | None = None,
                 weights: MetricWeights | None = None, progress: bool = False,
                 chunk: int = 25):
    """Run every realization; the result list is ordered by index and does
    not depend on the worker count."""
    solve_powerflow(case)  # validate the base case once, before any fan-out
    workers = workers or worker_count()
    chunks = [list(range(i, min(i + chunk, spec.n))) for i in range(0, spec.n, chunk)]
    out = []
    done = 0
    if workers == 1:
        _init_worker(case, spec, weights)
        it = map(_work, chunks)
        ex = None
    else:
        ex = ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(case, spec, weights))
        it = ex.map(_work, chunks)
    try:
        for batch in it:
            out.extend(batch)
            done += len(batch)
            if progress:
                n_st = sum(r.stable for r in out)
                print(f"\r{done}/{spec.n} realizations, {n_st} stable", end="", file=sys.stderr,
                      flush=True)
    finally:
        if ex is not None:
            ex.shutdown()
    if progress:
        print(file=sys.stderr)
    out.sort(key=lambda r: r.index)
    return out


@dataclass
class BinRate:
    lo: float
    hi: float
    center: float
    count: int
    unstable: int

    @property
    def rate(self) -> float:
        return self.unstable / self.count if self.count else float("nan")


def bin_rates(results, parameter: str, n_bins: int = 20, lo: float = 0.01, hi: float = 100.0):
    """Unstable fraction per log-spaced bin of ``parameter`` over [lo, hi]."""
    if not results or parameter not in results[0].values:
        raise KeyError(f"parameter {parameter!r} was not swept")
    edges = np.logspace(math.log10(lo), math.log10(hi), n_bins + 1)
    x = np.array([r.values[parameter] for r in results])
    bad = np.array([not r.stable for r in results])
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n_bins - 1)
    bins = []
    for b in range(n_bins):
        m = idx == b
        bins.append(BinRate(float(edges[b]), float(edges[b + 1]),
                            float(math.sqrt(edges[b] * edges[b + 1])), int(m.sum()),
                            int(bad[m].sum())))
    return bins


def decade_rate(results, parameter: str, lo: float, hi: float) -> float:
    """Unstable fraction among realizations with ``lo <= value < hi``."""
    sel = [r for r in results if lo <= r.values[parameter] < hi]
    if not sel:
        return float("nan")
    return sum(not r.stable for r in sel) / len(sel)


def top_configs(results, n: int = 5):
    stable = [r for r in results if r.stable and r.metric is not None]
    if not stable:
        warnings.warn("no stable realizations", RuntimeWarning, stacklevel=2)
        return []
    return sorted(stable, key=lambda r: (r.mu_ts, r.index))[:n]


@dataclass
class McSummary:
    total: int
    unstable: int
    rates: dict
    top: list

    def to_dict(self):
        return {
            "total": self.total,
            "unstable": self.unstable,
            "unstable_rate": self.unstable / self.total if self.total else float("nan"),
            "rates": {p: [{"lo": b.lo, "hi": b.hi, "center": b.center, "count": b.count,
                           "unstable": b.unstable, "rate": b.rate} for b in bins]
                      for p, bins in self.rates.items()},
            "top": [_row(r) for r in self.top],
        }


def summarize(results, spec: SweepSpec, n_bins: int = 20, top_n: int = 5) -> McSummary:
    rates = {p: bin_rates(results, p, n_bins, spec.lo, spec.hi) for p in spec.params}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        top = top_configs(results, top_n)
    return McSummary(len(results), sum(not r.stable for r in results), rates, top)


def _row(r: McRealization) -> dict:
    row = {"index": r.index, "sign": r.sign}
    row.update(r.values)
    row.update({"stable": r.stable, "reason": r.verdict.get("reason", ""),
                "mu_ts": r.mu_ts, "runtime": r.runtime})
    if r.metric:
        row.update({k: v for k, v in r.metric.items() if k != "mu_ts"})
    return row


def write_outputs(results, summary: McSummary, spec: SweepSpec, outdir) -> list:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    metric_cols = ["mu_t_rho", "mu_t_omega", "mu_t", "mu_s_omega", "mu_s_v", "mu_s"]
    cols = ["index", "sign", *spec.params, "stable", "reason", "mu_ts", *metric_cols, "runtime"]
    path = outdir / "realizations.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=cols, restval="")
        wr.writeheader()
        for r in results:
            wr.writerow(_row(r))
    written.append(path)
    for p, bins in summary.rates.items():
        path = outdir / f"rates_{p}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["lo", "hi", "center", "count", "unstable", "rate"])
            for b in bins:
                wr.writerow([b.lo, b.hi, b.center, b.count, b.unstable,
                             "" if b.count == 0 else b.rate])
        written.append(path)
    path = outdir / "top.json"
    path.write_text(json.dumps([_row(r) for r in summary.top], indent=2), encoding="utf-8")
    written.append(path)
    return written
