"""Per-hump success of the ground-state search over a geometric lambda grid.

Writes CSV ``lambda,k,success,zeta_star,terminal_height`` to stdout.

    python scripts/lambda_scan.py --model models/two_hump.json --lo 1e-2 --hi 1e3 --points 16
"""
import argparse
import sys

import numpy as np

from mgs.errors import MGSError, NonDecayingBoundary
from mgs.nonlinearity import NonlinearityModel
from mgs.radial_ivp import ShootingProblem
from mgs.shooting import require_decay, find_ground_state


def scan_row(problem, k):
    try:
        gs = require_decay(find_ground_state(problem, k))
        return True, gs.zeta_star, gs.terminal_height
    except NonDecayingBoundary as exc:
        return False, exc.ground_state.zeta_star, exc.ground_state.terminal_height
    except MGSError:
        return False, float("nan"), float("nan")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", required=True)
    ap.add_argument("--N", type=int, default=3)
    ap.add_argument("--lo", type=float, default=1e-2)
    ap.add_argument("--hi", type=float, default=1e3)
    ap.add_argument("--points", type=int, default=16)
    args = ap.parse_args()

    model = NonlinearityModel.from_json(args.model)
    base = ShootingProblem(args.N, args.lo, model)
    out = sys.stdout
    out.write("lambda,k,success,zeta_star,terminal_height\n")
    for lam in np.geomspace(args.lo, args.hi, args.points).tolist():
        problem = base.with_lambda(lam)
        for k in range(1, model.n + 1):
            ok, z, h = scan_row(problem, k)
            out.write(f"{lam!r},{k},{int(ok)},{z!r},{h!r}\n")
        out.flush()


if __name__ == "__main__":
    main()
