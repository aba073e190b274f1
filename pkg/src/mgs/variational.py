"""Discrete minimization of the truncated action over the 1-Lipschitz cone.

On the ball of radius ``rho`` a radial profile is a vector ``v_0..v_M`` on
nodes ``r_j = j h`` with ``v_M = 0`` and ``|v_{j+1} - v_j| <= h``. The action

    J(v) = sum_j rbar_j^{N-1} h [ (1 - sqrt(1 - s_j^2)) - lam (F_i(v_j) + F_i(v_{j+1})) / 2 ]

uses the cell slope ``s_j`` and the cell midpoint radius ``rbar_j``. Taking the
potential at the nodes rather than at the cell midpoint keeps the truncation
exact: clamping nodes at ``beta_i`` never raises J.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .config import VariationalConfig, worker_count
from .errors import ConeViolation, DomainError
from .nonlinearity import eval_F, eval_f, truncate


@dataclass(frozen=True)
class VariationalProblem:
    N: int
    lam: float
    rho: float
    i: int
    model: object
    M: int = 1024
    trunc_model: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise DomainError(f"dimension N must be an integer >= 2, got {self.N}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise DomainError("lambda must be positive and finite")
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise DomainError("rho must be positive and finite")
        if self.M < 16:
            raise DomainError("mesh needs at least 16 cells")
        object.__setattr__(self, "trunc_model", truncate(self.model, self.i))

    @classmethod
    def default(cls, N, lam, model, i, config=None):
        config = config or VariationalConfig()
        return cls(N, lam, config.rho_factor * model.finite_top(), i, model, config.mesh)

    @property
    def h(self):
        return self.rho / self.M

    @property
    def nodes(self):
        return np.arange(self.M + 1) * self.h

    @property
    def weights(self):
        rbar = (np.arange(self.M) + 0.5) * self.h
        return rbar ** (self.N - 1)

    @property
    def beta(self):
        return self.model.betas[self.i - 1]

    def profile(self, values):
        return DiscreteProfile(np.asarray(values, dtype=float), self.h)


@dataclass(frozen=True)
class DiscreteProfile:
    values: np.ndarray
    h: float

    @property
    def M(self):
        return self.values.size - 1

    @property
    def r(self):
        return np.arange(self.values.size) * self.h

    def slopes(self):
        return np.diff(self.values) / self.h

    def cone_violation(self):
        """Index of the first offending cell, -1 for the boundary node, or None."""
        if self.values[-1] != 0.0:
            return -1
        bad = np.flatnonzero(np.abs(np.diff(self.values)) > self.h)
        return int(bad[0]) if bad.size else None

    def check_cone(self):
        cell = self.cone_violation()
        if cell == -1:
            raise ConeViolation(f"boundary value v_M = {self.values[-1]!r} is not 0", cell)
        if cell is not None:
            d = self.values[cell + 1] - self.values[cell]
            raise ConeViolation(f"cell {cell}: |dv| = {abs(d)!r} exceeds h = {self.h!r}", cell)
        return self

    def to_csv(self):
        lines = ["r,v"]
        lines += [f"{r!r},{v!r}" for r, v in zip(self.r.tolist(), self.values.tolist())]
        return "\n".join(lines) + "\n"


def _cell_terms(vp, v):
    s = np.clip(np.diff(v.values) / vp.h, -1.0, 1.0)
    return s, np.sqrt(np.maximum(0.0, 1.0 - s * s))


def _node_weights(vp):
    """Trapezoid weight of each node: half of each adjacent cell."""
    cw = 0.5 * vp.h * vp.weights
    out = np.zeros(vp.M + 1)
    out[:-1] += cw
    out[1:] += cw
    return out


def eval_J(vp, v):
    """Midpoint-rule action of a cone profile."""
    if v.values.size != vp.M + 1:
        raise DomainError(f"profile has {v.values.size} nodes, mesh needs {vp.M + 1}")
    v.check_cone()
    s, root = _cell_terms(vp, v)
    slope = np.sum(vp.weights * vp.h * (1.0 - root))
    potential = np.sum(_node_weights(vp) * eval_F(vp.trunc_model, v.values))
    return float(slope - vp.lam * potential)


def grad_J(vp, v):
    """Gradient of :func:`eval_J` with respect to the free nodes ``v_0..v_{M-1}``."""
    s, root = _cell_terms(vp, v)
    with np.errstate(divide="ignore"):
        cell = vp.weights * s / root
    g = -vp.lam * _node_weights(vp) * eval_f(vp.trunc_model, v.values)
    g[:-1] -= cell
    g[1:] += cell
    return g[:-1]


def _fprime(model, s):
    step = 1e-7 * np.maximum(1.0, np.abs(s))
    return (eval_f(model, s + step) - eval_f(model, s - step)) / (2.0 * step)


def _metric(vp, v):
    """Tridiagonal positive definite model of the Hessian in banded storage.

    The slope part is exact; the potential part keeps only its convex share
    ``max(0, -lam f')``, so every direction it produces is a descent direction.
    """
    s, root = _cell_terms(vp, v)
    c = vp.weights / (vp.h * np.maximum(root, 1e-100) ** 3)
    d = np.maximum(0.0, -vp.lam * _node_weights(vp) * _fprime(vp.trunc_model, v.values))
    M = vp.M
    diag = d.copy()
    diag[:-1] += c
    diag[1:] += c
    off = -c[:-1]
    ab = np.zeros((3, M))
    ab[0, 1:] = off
    ab[1] = diag[:-1]
    ab[2, :-1] = off
    return ab


def project_cone(values, h):
    """Backward clamp from the boundary: ``v_j`` into ``[v_{j+1} - h, v_{j+1} + h]``."""
    out = np.array(values, dtype=float)
    out[-1] = 0.0
    for j in range(out.size - 2, -1, -1):
        nxt = out[j + 1]
        x = min(max(out[j], nxt - h), nxt + h)
        # the clamped difference can round to a hair above h
        while abs(x - nxt) > h:
            x = np.nextafter(x, nxt)
        out[j] = x
    return out


def plateau_profile(height, vp):
    """Flat top at ``height`` on ``[0, rho - 2 height]``, then ``(rho - r)/2``."""
    if not height > 0:
        raise DomainError("plateau height must be positive")
    if not vp.rho > 2.0 * height:
        raise DomainError(f"plateau of height {height} needs rho > {2.0 * height}, got {vp.rho}")
    r = vp.nodes
    v = np.minimum(height, 0.5 * (vp.rho - r))
    v[-1] = 0.0
    return vp.profile(v)


def steep_profile(height, vp, slope=0.9):
    """Flat top at ``height`` dropping to 0 with slope ``-slope`` (``slope < 1``)."""
    if not 0 < slope < 1:
        raise DomainError("ramp slope must lie in (0, 1)")
    if not vp.rho * slope > height > 0:
        raise DomainError("ramp does not fit inside the ball")
    v = np.minimum(height, slope * (vp.rho - vp.nodes))
    v[-1] = 0.0
    return vp.profile(v)


@dataclass(frozen=True)
class MinimizeResult:
    profile: DiscreteProfile
    J: float
    J_init: float
    converged: bool
    iterations: int
    decrement: float
    history: tuple = field(repr=False, default=())
    label: str = ""

    @property
    def center(self):
        return float(self.profile.values[0])

    def summary(self):
        return {"label": self.label, "J": self.J, "J_init": self.J_init,
                "converged": self.converged, "iterations": self.iterations,
                "decrement": self.decrement, "center_height": self.center,
                "max_height": float(np.max(self.profile.values))}


def _clamp(vp, v):
    cap = vp.trunc_model.cap
    if not np.any(v.values > cap):
        return v
    return vp.profile(np.minimum(v.values, cap))


def minimize_J(vp, init, config=None):
    """Damped Newton descent inside the cone.

    Steps solve the tridiagonal metric of :func:`_metric` against the
    gradient; each step is halved until it stays strictly inside the cone and
    satisfies the Armijo condition. Accepted iterates are clamped at
    ``beta_i``, which keeps them in the cone and cannot raise J. Stops when
    the Newton decrement drops below ``opt_tol * (1 + |J|)``.
    """
    config = config or VariationalConfig()
    v = init if isinstance(init, DiscreteProfile) else vp.profile(init)
    J0 = eval_J(vp, v)
    v = _clamp(vp, v)
    J = eval_J(vp, v)
    history = [J]
    dec = math.inf
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        g = grad_J(vp, v)
        step = solve_banded((1, 1), _metric(vp, v), g)
        dec = float(g @ step)
        if not dec > config.opt_tol * (1.0 + abs(J)):
            converged = True
            it -= 1
            break
        t = 1.0
        accepted = None
        while t > 1e-16:
            trial = v.values.copy()
            trial[:-1] -= t * step
            if np.all(np.abs(np.diff(trial)) < vp.h):
                cand = vp.profile(trial)
                Jn = eval_J(vp, cand)
                if Jn <= J - config.armijo * t * dec:
                    accepted = cand
                    break
            t *= config.backtrack
        if accepted is None:
            # no admissible decrease left at working precision
            converged = dec <= 1e3 * config.opt_tol * (1.0 + abs(J))
            break
        v = _clamp(vp, accepted)
        J = eval_J(vp, v) if v is not accepted else Jn
        history.append(J)
    return MinimizeResult(v, J, J0, converged, it, dec, tuple(history))


def check_escape(vp, v):
    """True when a hump ``i`` minimizer rises above ``beta_{i-1}``."""
    if vp.i < 2:
        raise DomainError("escape is defined against the previous hump; needs i >= 2")
    return bool(np.max(v.values) > vp.model.betas[vp.i - 2])


@dataclass(frozen=True)
class CenterHeight:
    value: float
    rejected: bool

    def __float__(self):
        return self.value


def center_height(v, vp=None):
    """``v_0``; flagged rejected when it falls outside ``(alpha_i, beta_i)``."""
    value = float(v.values[0])
    if vp is None:
        return CenterHeight(value, not value > 0)
    a, b = vp.model.bounds(vp.i)
    return CenterHeight(value, not (a < value < b))


def default_inits(vp, config=None, seed=None, n_random=0):
    """Labelled starting profiles: plateaus at gamma_i and beta_i, and a steep ramp."""
    config = config or VariationalConfig()
    model = vp.model
    gamma = model.gammas[vp.i - 1]
    beta = vp.beta
    top = beta if math.isfinite(beta) else 2.0 * gamma
    inits = []
    for label, height in (("plateau_gamma", gamma), ("plateau_beta", top)):
        if math.isfinite(height) and vp.rho > 2.0 * height:
            inits.append((label, plateau_profile(height, vp)))
    if vp.rho * config.steep_slope > top:
        inits.append(("steep_beta", steep_profile(top, vp, config.steep_slope)))
    if n_random:
        rng = np.random.default_rng(seed)
        lo = model.xis[vp.i - 1]
        for j in range(n_random):
            height = rng.uniform(lo, top)
            if vp.rho * config.steep_slope > height:
                inits.append((f"random_{j}", steep_profile(height, vp, config.steep_slope)))
    return inits


def multistart(vp, inits=None, config=None, seed=None, n_random=0):
    """Minimize from several starts; results sorted by J (best first)."""
    config = config or VariationalConfig()
    inits = inits if inits is not None else default_inits(vp, config, seed, n_random)
    if not inits:
        raise DomainError("no admissible starting profile fits in the ball")

    def run(item):
        label, init = item
        res = minimize_J(vp, init, config)
        return MinimizeResult(res.profile, res.J, res.J_init, res.converged, res.iterations,
                              res.decrement, res.history, label)

    workers = min(worker_count(), len(inits))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, inits))
    else:
        results = [run(item) for item in inits]
    return sorted(results, key=lambda res: (res.J, res.label))
