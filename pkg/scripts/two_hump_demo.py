"""Structure, ground states and ball minimizers for the two-hump quintic.

    python scripts/two_hump_demo.py --lambda 1
"""
import argparse
from pathlib import Path

from mgs.cli import dumps
from mgs.errors import MultiplicityNotReached
from mgs.nonlinearity import NonlinearityModel, verify_assumptions
from mgs.radial_ivp import ShootingProblem
from mgs.shooting import solve_multiplicity
from mgs.variational import VariationalProblem, center_height, check_escape, multistart

MODEL = Path(__file__).resolve().parent.parent / "models" / "two_hump.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lambda", dest="lam", type=float, default=1.0)
    ap.add_argument("--N", type=int, default=3)
    ap.add_argument("--mesh", type=int, default=1024)
    ap.add_argument("--json", help="write ground-state summaries here")
    args = ap.parse_args()

    model = NonlinearityModel.from_json(MODEL)
    report = verify_assumptions(model, args.N)
    print("assumptions:", ", ".join(f"{e.assumption}={e.passed}" for e in report.entries))
    print("alphas", model.alphas, "betas", model.betas, "xis", model.xis)

    problem = ShootingProblem(args.N, args.lam, model)
    try:
        states, boundaries = solve_multiplicity(problem), []
    except MultiplicityNotReached as exc:
        states, boundaries = exc.partial, exc.boundaries
        print(f"multiplicity not reached: failed humps {list(exc.failed)}")
    for gs in states:
        print(f"ground state k={gs.k}: zeta*={gs.zeta_star!r} width={gs.bracket_width:.2e} "
              f"R'={gs.plus_radius:.6g} u(R')={gs.terminal_height:.3e}")
    for b in boundaries:
        print(f"boundary k={b.k}: zeta={b.zeta_star!r} levels off at u={b.terminal_height!r} "
              f"(nearest zero {b.limit})")

    rho = 8.0 * model.finite_top()
    for i in range(1, model.n + 1):
        vp = VariationalProblem(args.N, args.lam, rho, i, model, args.mesh)
        best = multistart(vp)[0]
        seed = center_height(best.profile, vp)
        esc = check_escape(vp, best.profile) if i > 1 else None
        print(f"ball minimizer i={i}: J={best.J:.6g} center={seed.value!r} "
              f"rejected={seed.rejected} escape={esc}")
    if args.json:
        Path(args.json).write_text(dumps({"lambda": args.lam,
                                          "ground_states": [gs.summary() for gs in states],
                                          "boundaries": [b.summary() for b in boundaries]}))


if __name__ == "__main__":
    main()
