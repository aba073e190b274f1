"""Inspect the Plus/Minus boundary of one hump and cross-check it with scipy.

The boundary height is located by the package's bisection, then again with
scipy's DOP853 on (u, q) with q = u'/sqrt(1 - u'^2), bisecting on which
terminal event fires first. Along the boundary |u'| is within 1e-11 of 1, so
(u, u') coordinates lose most of their digits there; q keeps them.

    python scripts/boundary_check.py --model models/two_hump.json --hump 2 --lambda 1
"""
import argparse
import math

import numpy as np
from scipy.integrate import solve_ivp

from mgs.nonlinearity import NonlinearityModel, eval_f
from mgs.radial_ivp import ShootingProblem
from mgs.shooting import find_ground_state


def scipy_verdict(model, N, lam, zeta, r0=1e-6, r_max=1e3, rtol=1e-11):
    """'Plus', 'Minus' or 'Undetermined' for one height, integrated by DOP853."""
    f0 = float(eval_f(model, zeta))
    q0 = -lam * f0 * r0 / N
    u0 = zeta - lam * f0 * r0 * r0 / (2 * N)

    def rhs(r, y):
        u, q = y
        return [q / math.sqrt(1.0 + q * q), -(N - 1) * q / r - lam * float(eval_f(model, u))]

    def slope_zero(r, y):
        return y[1]

    def height_zero(r, y):
        return y[0]

    slope_zero.terminal = height_zero.terminal = True
    slope_zero.direction, height_zero.direction = 1, -1
    sol = solve_ivp(rhs, (r0, r_max), [u0, q0], method="DOP853", rtol=rtol, atol=1e-14,
                    events=(slope_zero, height_zero))
    if sol.t_events[0].size:
        return "Plus"
    if sol.t_events[1].size:
        return "Minus"
    return "Undetermined"


def scipy_boundary(model, N, lam, lo, hi, iters=60):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        v = scipy_verdict(model, N, lam, mid)
        if v == "Plus":
            lo = mid
        elif v == "Minus":
            hi = mid
        else:
            break
    return lo, hi


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", required=True)
    ap.add_argument("--hump", type=int, default=2)
    ap.add_argument("--N", type=int, default=3)
    ap.add_argument("--lambda", dest="lam", type=float, default=1.0)
    args = ap.parse_args()

    model = NonlinearityModel.from_json(args.model)
    problem = ShootingProblem(args.N, args.lam, model)
    gs = find_ground_state(problem, args.hump)
    prof = gs.profile
    print(f"package boundary: zeta={gs.zeta_star!r} bracket={gs.bracket}")
    print(f"  turns at r={gs.plus_radius:.6g}, height {gs.terminal_height!r} "
          f"(nearest zero of f: {gs.limit}); decayed={gs.decayed}")
    idx = np.searchsorted(prof.r, [1, 2, 5, 10, 20, 40, prof.r[-1]])
    for j in np.unique(np.minimum(idx, prof.r.size - 1)):
        print(f"  r={prof.r[j]:10.4f}  u={prof.u[j]:.10f}  u'={prof.uprime[j]: .3e}")

    lo, hi = model.xis[args.hump - 1], model.betas[args.hump - 1] - 1e-9
    slo, shi = scipy_boundary(model, args.N, args.lam, lo, hi)
    print(f"scipy DOP853 boundary: ({slo!r}, {shi!r}); "
          f"difference {0.5 * (slo + shi) - gs.zeta_star:.3e}")


if __name__ == "__main__":
    main()
