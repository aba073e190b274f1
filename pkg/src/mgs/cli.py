"""Command line entry point: ``mgs check|solve|classify|sweep|variational|threshold``.

Reports are JSON with sorted keys and shortest round-trip floats; profiles
are CSV. Exit codes: 0 success, 2 invalid input or failed assumptions,
3 multiplicity not reached, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import SolverConfig
from .errors import (AssumptionViolation, DomainError, MGSError, MultiplicityNotReached,
                     ThresholdError)
from .nonlinearity import NonlinearityModel, verify_assumptions
from .radial_ivp import ShootingProblem
from .shooting import classify, find_lambda_threshold, solve_multiplicity, sweep_zeta
from .variational import VariationalProblem, center_height, check_escape, multistart

EXIT_OK, EXIT_INPUT, EXIT_MULTIPLICITY, EXIT_NUMERICAL = 0, 2, 3, 4


@dataclass(frozen=True)
class RunConfig:
    model: str
    N: int = 3
    lam: float | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    rho: float | None = None
    mesh: int = 1024
    out: str | None = None
    seed: int = 0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise DomainError(f"--N must be an integer >= 2, got {self.N}")
        if self.lam is not None and not self.lam > 0:
            raise DomainError("--lambda must be positive")
        tols = {
            "rtol": self.solver.ode.rel, "atol": self.solver.ode.abs,
            "root_tol": self.solver.structure.root_tol, "zeta_tol": self.solver.shooting.zeta_tol,
            "opt_tol": self.solver.variational.opt_tol,
        }
        if self.solver.shooting.decay_tol is not None:
            tols["decay_tol"] = self.solver.shooting.decay_tol
        bad = [k for k, v in tols.items() if not v > 0]
        if bad:
            raise DomainError(f"tolerances must be positive: {bad}")
        if self.out is not None:
            path = Path(self.out)
            probe = path / ".mgs_write_probe"
            try:
                path.mkdir(parents=True, exist_ok=True)
                probe.write_text("")
                probe.unlink()
            except OSError as exc:
                raise DomainError(f"output directory {self.out} is not writable: {exc}") from exc

    def to_dict(self):
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out


def clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj):
    return json.dumps(clean(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _write(out, name, text):
    if out is None:
        return None
    path = Path(out) / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def _report_base(run, command):
    return {"tool": "mgs", "version": __version__, "command": command, "config": run.to_dict()}


def _load(run):
    return NonlinearityModel.from_json(run.model, run.solver.structure)


def _problem(run, model):
    if run.lam is None:
        raise DomainError("--lambda is required for this command")
    return ShootingProblem(run.N, run.lam, model, check=False)


def run_check(run):
    model = _load(run)
    report = verify_assumptions(model, run.N, run.solver.structure)
    out = _report_base(run, "check")
    out["model"] = model.to_dict()
    out["assumptions"] = report.to_list()
    out["all_passed"] = report.all_passed
    return out, (EXIT_OK if report.all_passed else EXIT_INPUT)


def _variational_summary(run, model, i):
    rho = run.rho if run.rho is not None else run.solver.variational.rho_factor * model.finite_top()
    vp = VariationalProblem(run.N, run.lam, rho, i, model, run.mesh)
    results = multistart(vp, config=run.solver.variational, seed=run.seed)
    best = results[0]
    seed = center_height(best.profile, vp)
    summary = {
        "i": i, "rho": rho, "mesh": run.mesh, "J": best.J, "converged": best.converged,
        "center_height": seed.value, "seed_rejected": seed.rejected,
        "escape": check_escape(vp, best.profile) if i >= 2 else None,
        "starts": [res.summary() for res in results],
    }
    return summary, best


def run_solve(run, with_variational=True):
    model = _load(run)
    report = verify_assumptions(model, run.N, run.solver.structure)
    out = _report_base(run, "solve")
    out["assumptions"] = report.to_list()
    if not report.all_passed:
        out["status"] = "assumptions_failed"
        return out, EXIT_INPUT
    problem = _problem(run, model)
    code = EXIT_OK
    try:
        states = solve_multiplicity(problem, run.solver)
        out["status"] = "ok"
        out["failures"] = {}
    except MultiplicityNotReached as exc:
        states = list(exc.partial)
        out["status"] = "multiplicity_not_reached"
        out["failures"] = {str(k): exc.reasons.get(k, "") for k in exc.failed}
        out["boundaries"] = [gs.summary() for gs in exc.boundaries]
        code = EXIT_MULTIPLICITY
    out["ground_states"] = [gs.summary() for gs in states]
    out["count"] = len(states)
    for gs in states:
        _write(run.out, f"profile_k{gs.k}.csv", gs.profile.to_csv())
    if with_variational:
        out["variational"] = []
        for i in range(1, model.n + 1):
            summary, best = _variational_summary(run, model, i)
            out["variational"].append(summary)
            _write(run.out, f"variational_i{i}.csv", best.profile.to_csv())
    return out, code


def run_classify(run, zeta):
    problem = _problem(run, _load(run))
    c = classify(problem, zeta, config=run.solver)
    out = _report_base(run, "classify")
    out["classification"] = c.to_dict()
    out["trajectory"] = c.trajectory.summary()
    _write(run.out, "trajectory.csv", c.trajectory.to_csv())
    return out, EXIT_OK


def atlas_csv(rows):
    lines = ["zeta,verdict,radius,u_end,slope_end"]
    for z, c in rows:
        lines.append(",".join([repr(float(z)), c.verdict.value, repr(float(c.radius)),
                               repr(float(c.u_end)), repr(float(c.slope_end))]))
    return "\n".join(lines) + "\n"


def run_sweep(run, k, grid):
    problem = _problem(run, _load(run))
    rows = sweep_zeta(problem, k, grid, config=run.solver)
    text = atlas_csv(rows)
    out = _report_base(run, "sweep")
    out["hump"] = k
    out["grid"] = grid
    counts = {}
    for _, c in rows:
        counts[c.verdict.value] = counts.get(c.verdict.value, 0) + 1
    out["counts"] = counts
    out["atlas"] = _write(run.out, f"sweep_k{k}.csv", text)
    return out, EXIT_OK, text


def run_variational(run, i):
    model = _load(run)
    if run.lam is None:
        raise DomainError("--lambda is required for this command")
    summary, best = _variational_summary(run, model, i)
    out = _report_base(run, "variational")
    out["variational"] = summary
    out["profile"] = _write(run.out, f"variational_i{i}.csv", best.profile.to_csv())
    return out, EXIT_OK


def run_threshold(run, k, lam_range, steps):
    model = _load(run)
    problem = ShootingProblem(run.N, lam_range[0], model, check=False)
    out = _report_base(run, "threshold")
    try:
        res = find_lambda_threshold(problem, k, lam_range, steps, run.solver)
    except ThresholdError as exc:
        out["threshold"] = None
        out["error"] = str(exc)
        out["samples"] = [{"lambda": lam, "success": ok} for lam, ok in exc.samples]
        return out, EXIT_NUMERICAL
    out["threshold"] = res.to_dict()
    return out, EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="mgs", description="Radial ground states for the "
                                "Minkowski mean curvature equation with a sign-changing source.")
    p.add_argument("--version", action="version", version=f"mgs {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, lam=True):
        sp.add_argument("--model", required=True, help="JSON model file")
        sp.add_argument("--N", type=int, default=3, help="space dimension (>= 2)")
        if lam:
            sp.add_argument("--lambda", dest="lam", type=float, help="parameter lambda > 0")
        sp.add_argument("--rtol", type=float, help="ODE relative tolerance")
        sp.add_argument("--atol", type=float, help="ODE absolute tolerance")
        sp.add_argument("--rmax", type=float, help="integration radius cap")
        sp.add_argument("--r0", type=float, help="series start radius")
        sp.add_argument("--root-tol", type=float, help="structure root tolerance (relative)")
        sp.add_argument("--zeta-tol", type=float, help="shooting bracket tolerance (relative)")
        sp.add_argument("--opt-tol", type=float, help="variational stopping tolerance")
        sp.add_argument("--decay-tol", type=float, help="absolute decay tolerance")
        sp.add_argument("--rho", type=float, help="ball radius for the variational problem")
        sp.add_argument("--mesh", type=int, default=1024, help="mesh cells for the ball problem")
        sp.add_argument("--out", help="directory for JSON reports and CSV profiles")
        sp.add_argument("--seed", type=int, default=0, help="multistart seed")

    common(sub.add_parser("check", help="verify (A1)-(A5) for a model"), lam=False)
    sp = sub.add_parser("solve", help="one ground state per hump")
    common(sp)
    sp.add_argument("--no-variational", action="store_true", help="skip ball minimizers")
    sp = sub.add_parser("classify", help="classify one initial height")
    common(sp)
    sp.add_argument("--zeta", type=float, required=True)
    sp = sub.add_parser("sweep", help="classification atlas over one hump")
    common(sp)
    sp.add_argument("--hump", type=int, required=True)
    sp.add_argument("--grid", type=int, default=64)
    sp = sub.add_parser("variational", help="minimize the truncated action on a ball")
    common(sp)
    sp.add_argument("--hump", type=int, required=True)
    sp = sub.add_parser("threshold", help="probe the lambda threshold of one hump")
    common(sp, lam=False)
    sp.add_argument("--hump", type=int, required=True)
    sp.add_argument("--lambda-range", type=float, nargs=2, required=True, metavar=("LO", "HI"))
    sp.add_argument("--steps", type=int, default=12)
    return p


def config_from_args(args):
    solver = SolverConfig()
    ode = {k: v for k, v in (("rel", args.rtol), ("abs", args.atol), ("r_max", args.rmax),
                             ("r0", args.r0)) if v is not None}
    solver = replace(solver, ode=replace(solver.ode, **ode))
    if args.root_tol is not None:
        solver = replace(solver, structure=replace(solver.structure, root_tol=args.root_tol))
    sh = {k: v for k, v in (("zeta_tol", args.zeta_tol), ("decay_tol", args.decay_tol))
          if v is not None}
    solver = replace(solver, shooting=replace(solver.shooting, **sh))
    va = {"mesh": args.mesh}
    if args.opt_tol is not None:
        va["opt_tol"] = args.opt_tol
    solver = replace(solver, variational=replace(solver.variational, **va))
    return RunConfig(model=args.model, N=args.N, lam=getattr(args, "lam", None), solver=solver,
                     rho=args.rho, mesh=args.mesh, out=args.out, seed=args.seed)


def dispatch(args):
    run = config_from_args(args)
    text = None
    if args.command == "check":
        out, code = run_check(run)
    elif args.command == "solve":
        out, code = run_solve(run, with_variational=not args.no_variational)
    elif args.command == "classify":
        out, code = run_classify(run, args.zeta)
    elif args.command == "sweep":
        out, code, text = run_sweep(run, args.hump, args.grid)
    elif args.command == "variational":
        out, code = run_variational(run, args.hump)
    else:
        out, code = run_threshold(run, args.hump, tuple(args.lambda_range), args.steps)
    out["exit_code"] = code
    return out, code, text


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        out, code, _ = dispatch(args)
    except AssumptionViolation as exc:
        out, code = {"error": str(exc), "kind": "assumption"}, EXIT_INPUT
    except DomainError as exc:
        out, code = {"error": str(exc), "kind": "input"}, EXIT_INPUT
    except MultiplicityNotReached as exc:
        out, code = {"error": str(exc), "kind": "multiplicity"}, EXIT_MULTIPLICITY
    except MGSError as exc:
        out, code = {"error": str(exc), "kind": "numerical"}, EXIT_NUMERICAL
    text = dumps(out)
    if getattr(args, "out", None) and "error" not in out:
        _write(args.out, f"{args.command}.json", text)
    sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
