"""Command-line front end: ``gscsim {pf,sim,ssa,qep,metric,mc}``.

Every command writes ``manifest.json`` next to its outputs. Exit codes: 0
success, 2 invalid input, 3 numerical failure, 4 unstable verdict (``sim`` and
``ssa`` with ``--check``).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend
from .caseio import load_bundled, parse_case
from .gsc import IllPosedError, make_preset
from .metrics import (MetricWeights, coi_frequency, coi_weights,
                      energy_decomposition, mu_ts)
from .netmodel import CaseError, PowerFlowError, parse_event, solve_powerflow
from .qep import PencilError, QuadraticPencil, analyze
from .ssa import LinearizationError, StabilityThresholds, classify_stability, damping_ratios, linearize
from .tds import (EquilibriumError, SimOptions, SimulationError, Trajectory, find_equilibrium,
                  initialize, simulate)

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_UNSTABLE = 0, 2, 3, 4

log = logging.getLogger("gscsim")


class UnstableVerdict(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    options: dict
    inputs: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__
    backend: str = field(default_factory=backend)
    started: str = ""
    wall_clock: float = 0.0
    outputs: list = field(default_factory=list)
    exit_code: int = 0

    def write(self, outdir: Path):
        outdir.mkdir(parents=True, exist_ok=True)
        path = outdir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=False), encoding="utf-8")
        return path


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_case(ref: str):
    p = Path(ref)
    if p.exists():
        return parse_case(p), {str(p): _sha256(p)}
    if not p.suffix or p.suffix == ".case":
        try:
            return load_bundled(p.stem if p.suffix else ref), {f"bundled:{ref}": "bundled"}
        except FileNotFoundError:
            pass
    raise CaseError(f"case file {ref!r} not found")


def _dump(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2), encoding="utf-8")
    return path


def _options(args):
    return SimOptions(h=args.step, tf=args.tf, decimation=args.decimation)


def _event(args, case):
    if not args.event:
        return None
    ev = parse_event(args.event)
    if ev.bus not in case.bus_index():
        raise CaseError(f"event at unknown bus {ev.bus}")
    return ev


def _complex_list(z):
    return [[float(x.real), float(x.imag)] for x in np.asarray(z, complex)]


# -- commands ---------------------------------------------------------------

def cmd_pf(args, man):
    case, man.inputs = _load_case(args.case)
    pf = solve_powerflow(case, tol=args.tol)
    out = {
        "iterations": pf.iterations,
        "mismatch": pf.mismatch,
        "buses": [{"id": b, "v": float(pf.v[i]), "theta": float(pf.theta[i])}
                  for i, b in enumerate(pf.bus_ids)],
        "devices": [{"name": d.name, "bus": d.bus, "p": float(pf.p_inj[k]), "q": float(pf.q_inj[k])}
                    for k, d in enumerate(case.devices)],
    }
    man.outputs.append(str(_dump(out, args.out / "powerflow.json")))
    return out


def _stability(case, model, w0, traj, ev):
    eq = find_equilibrium(case, event=ev, init=(model, w0),
                          guess=traj.states[-1] if traj is not None and traj.completed else None)
    loads = ev.loads_after(case) if ev is not None else None
    lin = linearize(model, eq.w, loads)
    lam = lin.eigenvalues
    verdict = classify_stability(traj, lam, StabilityThresholds(), eta_f=eq.eta)
    return eq, lin, lam, verdict


def cmd_sim(args, man):
    case, man.inputs = _load_case(args.case)
    ev = _event(args, case)
    model, w0, _ = initialize(case)
    traj = simulate(case, event=ev, options=_options(args), init=(model, w0))
    path = args.out / "trajectory.csv"
    traj.to_csv(path)
    man.outputs.append(str(path))
    out = traj.summary()
    if args.check:
        verdict = None
        if traj.completed:
            try:
                verdict = _stability(case, model, w0, traj, ev)[3]
            except (EquilibriumError, LinearizationError) as exc:
                out["verdict"] = {"stable": False, "reason": str(exc)}
        if verdict is not None:
            out["verdict"] = verdict.to_dict()
        elif not traj.completed:
            out["verdict"] = {"stable": False, "reason": f"diverged: {traj.message}"}
    man.outputs.append(str(_dump(out, args.out / "summary.json")))
    if args.check and not out["verdict"]["stable"]:
        raise UnstableVerdict(out)
    return out


def cmd_ssa(args, man):
    case, man.inputs = _load_case(args.case)
    ev = _event(args, case)
    model, w0, _ = initialize(case)
    traj = simulate(case, event=ev, options=_options(args), init=(model, w0))
    if not traj.completed:
        out = {"verdict": classify_stability(traj, []).to_dict(), "eigenvalues": []}
    else:
        eq, lin, lam, verdict = _stability(case, model, w0, traj, ev)
        order = np.argsort(-lam.real)
        out = {
            "omega_f": eq.omega_f,
            "states": lin.states,
            "rotation_removed": lin.rotation_removed,
            "eigenvalues": _complex_list(lam[order]),
            "damping_ratios": damping_ratios(lam[order]).tolist(),
            "verdict": verdict.to_dict(),
        }
    man.outputs.append(str(_dump(out, args.out / "ssa.json")))
    if args.check and not out["verdict"]["stable"]:
        raise UnstableVerdict(out)
    return out


def _matrix(text):
    vals = [float(x) for x in text.replace(";", ",").split(",")]
    if len(vals) != 4:
        raise ValueError(f"expected 4 comma-separated entries, got {text!r}")
    return np.array(vals).reshape(2, 2)


def cmd_qep(args, man):
    if args.preset:
        vals = dict(kv.split("=") for kv in args.values.split(",")) if args.values else {}
        p = make_preset(args.preset, {k: float(v) for k, v in vals.items()})
        M, D, K = p.M, p.D, p.K
    else:
        if not (args.M and args.D and args.K):
            raise ValueError("give --M, --D and --K (or --preset with --values)")
        M, D, K = _matrix(args.M), _matrix(args.D), _matrix(args.K)
    scale = args.omega_b if args.omega_b else 1.0
    out = analyze(QuadraticPencil(M, D, scale * K))
    out["stiffness_scale"] = scale
    man.outputs.append(str(_dump(out, args.out / "qep.json")))
    return out


def cmd_metric(args, man):
    traj = Trajectory.from_csv(args.trajectory, events=[args.t_start] if args.t_start is not None else ())
    man.inputs = {str(args.trajectory): _sha256(args.trajectory)}
    weights = MetricWeights.parse(args.weights)
    out = {"mu": mu_ts(traj, weights, t_start=args.t_start).to_dict()}
    if args.case:
        case, extra = _load_case(args.case)
        man.inputs.update(extra)
        if [d.name for d in case.devices] != traj.device_names:
            raise CaseError("trajectory devices do not match the case")
        wts = coi_weights(case.devices)
        coi = coi_frequency(traj.omega, wts)
        out["coi"] = {"final": float(coi[-1]), "min": float(coi.min()), "max": float(coi.max())}
        model, _, _ = initialize(case)
        out["energy"] = {d.name: energy_decomposition(traj, k, model.params[k], case.omega_b,
                                                      args.t_start).endpoint()
                         for k, d in enumerate(case.devices)}
        path = args.out / "coi.csv"
        np.savetxt(path, np.column_stack([traj.t, coi]), delimiter=",", header="time,omega_coi",
                   comments="", fmt="%.17g")
        man.outputs.append(str(path))
    man.outputs.append(str(_dump(out, args.out / "metric.json")))
    return out


def cmd_mc(args, man):
    from .mc import SweepSpec, run_campaign, summarize, worker_count, write_outputs
    case, man.inputs = _load_case(args.case)
    doc = {}
    if args.spec:
        doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        man.inputs[str(args.spec)] = _sha256(args.spec)
    for key in ("preset", "n", "seed", "tf"):
        val = getattr(args, key)
        if val is not None:
            doc[key] = val
    if args.step is not None:
        doc["h"] = args.step
    if args.params:
        doc["params"] = args.params.split(",")
    spec = SweepSpec.from_dict(doc)
    man.seed = spec.seed
    man.options["campaign"] = spec.to_dict()
    workers = args.workers or worker_count(1)
    results = run_campaign(case, spec, workers=workers, weights=MetricWeights.parse(args.weights),
                           progress=not args.quiet)
    summary = summarize(results, spec, n_bins=args.bins, top_n=args.top)
    man.outputs += [str(p) for p in write_outputs(results, summary, spec, args.out)]
    d = summary.to_dict()
    return {"total": d["total"], "unstable": d["unstable"], "unstable_rate": d["unstable_rate"],
            "top": d["top"]}


# -- parser -----------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="gscsim", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"gscsim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")

    def timing(p, tf=20.0, step=0.005):
        p.add_argument("--tf", type=float, default=tf, help="horizon [s]")
        p.add_argument("--step", type=float, default=step, help="integration step [s]")
        p.add_argument("--decimation", type=int, default=1)
        p.add_argument("--event", help="load step, e.g. bus=5,dp=0.5,dq=0.5,t=1")

    p = sub.add_parser("pf", help="power flow")
    p.add_argument("case")
    p.add_argument("--tol", type=float, default=1e-10)
    common(p)
    p.set_defaults(func=cmd_pf)

    p = sub.add_parser("sim", help="time-domain simulation to trajectory.csv")
    p.add_argument("case")
    timing(p)
    p.add_argument("--check", action="store_true", help="classify stability; exit 4 if unstable")
    common(p)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("ssa", help="linearize at the post-event equilibrium and classify")
    p.add_argument("case")
    timing(p)
    p.add_argument("--check", action="store_true", help="exit 4 on an unstable verdict")
    common(p)
    p.set_defaults(func=cmd_ssa)

    p = sub.add_parser("qep", help="quartic coefficients and roots of a 2x2 pencil")
    p.add_argument("--M", help="row-major entries m11,m12,m21,m22")
    p.add_argument("--D")
    p.add_argument("--K")
    p.add_argument("--preset", help="build the pencil from a preset instead")
    p.add_argument("--values", help="preset scalars, e.g. M22=10,D22=50,D11=100,K11=10")
    p.add_argument("--omega-b", type=float, default=None, help="scale K by this rate base")
    common(p)
    p.set_defaults(func=cmd_qep)

    p = sub.add_parser("metric", help="mu_ts, CoI frequency and energy split of a trajectory")
    p.add_argument("trajectory", type=Path)
    p.add_argument("--case", help="case for CoI weights and the energy split")
    p.add_argument("--t-start", type=float, default=None)
    p.add_argument("--weights", default="kt_w=1,kt_r=1,ks_w=1,ks_v=1")
    common(p)
    p.set_defaults(func=cmd_metric)

    p = sub.add_parser("mc", help="Monte Carlo campaign")
    p.add_argument("case")
    p.add_argument("--spec", help="campaign JSON (SweepSpec fields)")
    p.add_argument("--preset", default=None)
    p.add_argument("--params", default=None, help="comma-separated swept names")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tf", type=float, default=None)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--workers", type=int, default=None, help="overrides GSCSIM_WORKERS")
    p.add_argument("--weights", default="kt_w=1,kt_r=1,ks_w=1,ks_v=1")
    p.add_argument("--quiet", action="store_true")
    common(p)
    p.set_defaults(func=cmd_mc)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    opts = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    man = RunManifest(args.command, opts, seed=getattr(args, "seed", None),
                      started=datetime.now(timezone.utc).isoformat(timespec="seconds"))
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        out = args.func(args, man)
        print(json.dumps(out, indent=2))
    except UnstableVerdict as exc:
        print(json.dumps(exc.args[0], indent=2))
        code = EXIT_UNSTABLE
    except (CaseError, IllPosedError, PencilError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INVALID
    except (PowerFlowError, SimulationError, EquilibriumError, LinearizationError,
            np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    man.wall_clock = time.perf_counter() - t0
    man.exit_code = code
    try:
        man.write(args.out)
    except OSError as exc:
        print(f"could not write manifest: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
