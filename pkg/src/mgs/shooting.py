"""Shooting on the initial height: classification, bisection, multiplicity."""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .config import SolverConfig, worker_count
from .errors import (BracketInvalid, DomainError, MGSError, MultiplicityNotReached,
                     NonDecayingBoundary, NumericalFailure, ThresholdError)
from .nonlinearity import eval_F
from .radial_ivp import (Terminal, Trajectory, default_r_max, energy_budget, energy_residual,
                         integrate)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


class Verdict(str, enum.Enum):
    PLUS = "Plus"
    MINUS = "Minus"
    UNDETERMINED = "Undetermined"
    EQUILIBRIUM = "Equilibrium"
    FAILED = "Failed"


@dataclass(frozen=True)
class Classification:
    verdict: Verdict
    zeta: float
    radius: float
    u_end: float
    slope_end: float
    detail: dict = field(default_factory=dict)
    trajectory: Trajectory | None = field(default=None, repr=False, compare=False)

    def to_dict(self):
        return {"zeta": self.zeta, "verdict": self.verdict.value, "radius": self.radius,
                "u_end": self.u_end, "slope_end": self.slope_end, "detail": self.detail}


def _resolve_rmax(problem, r_max, config):
    if r_max is not None:
        return float(r_max)
    return float(config.ode.r_max or default_r_max(problem))


def classify(problem, zeta, r_max=None, config=None):
    """Plus / Minus / Undetermined / Equilibrium verdict for one initial height.

    A step failure (including an ambiguous simultaneous event) raises
    :class:`NumericalFailure` carrying the terminal diagnostics.
    """
    config = config or SolverConfig()
    traj = integrate(problem, zeta, _resolve_rmax(problem, r_max, config), config.ode)
    term = traj.terminal
    last = traj.final
    if term.kind is Terminal.STEP_FAILURE:
        raise NumericalFailure(f"integration failed at zeta = {zeta!r}: {term.detail}",
                               {"zeta": float(zeta), "radius": term.radius, **term.detail})
    verdict = {
        Terminal.SLOPE_VANISHED: Verdict.PLUS,
        Terminal.HEIGHT_VANISHED: Verdict.MINUS,
        Terminal.REACHED_RMAX: Verdict.UNDETERMINED,
        Terminal.EQUILIBRIUM: Verdict.EQUILIBRIUM,
    }[term.kind]
    return Classification(verdict, float(zeta), term.radius, last.u, last.uprime,
                          trajectory=traj)


def _classify_safe(problem, zeta, r_max, config):
    try:
        return classify(problem, zeta, r_max, config)
    except NumericalFailure as exc:
        return Classification(Verdict.FAILED, float(zeta), exc.detail.get("radius", math.nan),
                              exc.detail.get("u", math.nan), math.nan, dict(exc.detail))


def _pool_map(fn, items):
    workers = min(worker_count(), len(items))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _upper(model, k):
    """Upper end of hump ``k``; a finite stand-in under (A2)'."""
    beta = model.betas[k - 1]
    if math.isfinite(beta):
        return beta
    return max(model.search_max, 4.0 * model.xis[k - 1])


def sweep_zeta(problem, k, grid, r_max=None, config=None, interval=None):
    """Classify ``grid`` evenly spaced heights across hump ``k``.

    The default interval is ``(alpha_k + eps, beta_k - eps)`` with
    ``eps = 1e-9 (beta_k - alpha_k)``. Failures appear inline as ``Failed``.
    """
    config = config or SolverConfig()
    if grid < 1:
        raise DomainError("grid must contain at least one point")
    if interval is None:
        a, b = problem.model.alphas[k - 1], _upper(problem.model, k)
        eps = 1e-9 * (b - a)
        interval = (a + eps, b - eps)
    zetas = np.linspace(interval[0], interval[1], grid) if grid > 1 else np.array([interval[0]])
    r_max = _resolve_rmax(problem, r_max, config)
    return list(zip(zetas.tolist(),
                    _pool_map(lambda z: _classify_safe(problem, z, r_max, config), zetas.tolist())))


def minus_candidates(model, k, count):
    """Scan heights for hump ``k``: uniform over (xi_k, beta_k) plus a geometric
    cluster toward ``beta_k``, ordered from the top down."""
    xi, top = model.xis[k - 1], _upper(model, k)
    uniform = np.linspace(xi, top, count + 2)[1:-1]
    gaps = (top - xi) * 2.0 ** -np.arange(1, 60)
    geometric = top - gaps[gaps > 4.0 * np.spacing(top)]
    pts = np.unique(np.concatenate([uniform, geometric]))
    return pts[(pts > xi) & (pts < top)][::-1]


@dataclass(frozen=True)
class MinusSeed:
    zeta: float
    source: str
    classification: Classification = field(repr=False, compare=False, default=None)


def seed_minus(problem, k, rho=None, config=None, r_max=None, use_variational=True):
    """A height in hump ``k`` whose trajectory hits zero height (Minus).

    Tries the centers of the ball minimizers first, then scans
    :func:`minus_candidates` from the top of the hump downward.
    """
    from .variational import VariationalProblem, center_height, multistart

    config = config or SolverConfig()
    model = problem.model
    r_max = _resolve_rmax(problem, r_max, config)
    if use_variational:
        vc = config.variational
        rho = rho if rho is not None else vc.rho_factor * model.finite_top()
        try:
            vp = VariationalProblem(problem.N, problem.lam, rho, k, model, vc.mesh)
            results = multistart(vp, config=vc)
        except MGSError:
            results = []
        for res in results:
            seed = center_height(res.profile, vp)
            if seed.rejected:
                continue
            c = _classify_safe(problem, seed.value, r_max, config)
            if c.verdict is Verdict.MINUS:
                return MinusSeed(seed.value, f"variational:{res.label}", c)
    for z in minus_candidates(model, k, config.shooting.scan_points):
        c = _classify_safe(problem, float(z), r_max, config)
        if c.verdict is Verdict.MINUS:
            return MinusSeed(float(z), "scan", c)
    raise MultiplicityNotReached(f"no Minus height found in hump {k} at lambda = {problem.lam!r}",
                                 lam=problem.lam, failed=(k,))


@dataclass(frozen=True)
class GroundState:
    """A converged shooting solution for hump ``k``.

    ``profile`` is the Plus-side bracket trajectory, which follows the ground
    state until it turns at its slope-zero radius; ``terminal_height`` is its
    height there and ``minus_radius`` is where the Minus-side neighbour hits 0.
    """

    k: int
    zeta_star: float
    lam: float
    profile: Trajectory = field(repr=False)
    bracket: tuple
    bracket_width: float
    energy_residual: float
    energy_budget: float
    terminal_height: float
    decay_tol: float
    plus_radius: float
    minus_radius: float
    bisections: int
    minus_source: str = ""
    alternates: tuple = ()
    profile_model_zeros: tuple = field(default=(0.0,), repr=False)

    @property
    def decayed(self):
        return self.terminal_height < self.decay_tol

    @property
    def strictly_decreasing(self):
        """Negative slope at every sample before the turn, and u never rising.

        Near the center u moves by less than one ulp per step, so consecutive
        heights may compare equal even though the slope is negative.
        """
        u, q = self.profile.u, self.profile.q
        return bool(np.all(q[:-1] < 0) and np.all(np.diff(u) <= 0) and u[-1] < u[0])

    @property
    def limit(self):
        """The zero of f (0 included) closest to the terminal height."""
        return nearest_zero(self.profile_model_zeros, self.terminal_height)

    @property
    def multiplicity_flag(self):
        return bool(self.alternates)

    def summary(self):
        return {
            "k": self.k, "zeta_star": self.zeta_star, "lambda": self.lam,
            "bracket": list(self.bracket), "bracket_width": self.bracket_width,
            "energy_residual": self.energy_residual, "energy_budget": self.energy_budget,
            "terminal_height": self.terminal_height, "decay_tol": self.decay_tol,
            "decayed": self.decayed, "strictly_decreasing": self.strictly_decreasing,
            "plus_radius": self.plus_radius, "minus_radius": self.minus_radius,
            "bisections": self.bisections, "minus_source": self.minus_source,
            "min_gradient_gap": self.profile.min_gradient_gap, "limit": self.limit,
            "alternates": list(self.alternates), "multiplicity_flag": self.multiplicity_flag,
        }


def nearest_zero(zeros, height):
    return float(min(zeros, key=lambda z: abs(z - height)))


def model_zeros(model):
    return (0.0, *model.alphas, *[b for b in model.betas if math.isfinite(b)])


def decay_tol(model, config=None):
    """``decay_factor * beta_1``, with alpha_1 standing in when beta_1 is infinite."""
    config = config or SolverConfig()
    if config.shooting.decay_tol is not None:
        return float(config.shooting.decay_tol)
    b1 = model.betas[0]
    return config.shooting.decay_factor * (b1 if math.isfinite(b1) else model.alphas[0])


def _plus_seed(problem, k, r_max, config):
    model = problem.model
    xi, alpha = model.xis[k - 1], model.alphas[k - 1]
    c = _classify_safe(problem, xi, r_max, config)
    if c.verdict is Verdict.PLUS:
        return c
    for frac in (0.5, 0.25, 0.75, 0.1, 0.9):
        c = _classify_safe(problem, alpha + frac * (xi - alpha), r_max, config)
        if c.verdict is Verdict.PLUS:
            return c
    raise BracketInvalid(f"no Plus height found in (alpha_{k}, xi_{k}]")


def _expand(problem, k, plus, minus, r_max, config):
    """Golden-ratio re-expansion when both ends landed on the same side."""
    model = problem.model
    lo_end, hi_end = model.alphas[k - 1], _upper(model, k)
    for _ in range(config.shooting.max_expansions):
        if plus.verdict is Verdict.PLUS and minus.verdict is Verdict.MINUS:
            return plus, minus
        if plus.verdict is not Verdict.PLUS:
            z = lo_end + (plus.zeta - lo_end) / GOLDEN
            plus = _classify_safe(problem, z, r_max, config)
        if minus.verdict is not Verdict.MINUS:
            z = hi_end - (hi_end - minus.zeta) / GOLDEN
            minus = _classify_safe(problem, z, r_max, config)
    if plus.verdict is Verdict.PLUS and minus.verdict is Verdict.MINUS:
        return plus, minus
    raise BracketInvalid(f"bracket ends classify {plus.verdict.value} / {minus.verdict.value}")


def _gap(a, b):
    return abs(b - a)


def find_ground_state(problem, k, zeta_tol=None, config=None, r_max=None, minus=None,
                      plus=None, rho=None):
    """Bisect between a Plus and a Minus height of hump ``k``.

    Stops once the bracket is below ``zeta_tol`` (relative) and the Plus
    trajectory has decayed under :func:`decay_tol`, or when the bracket can no
    longer shrink in floating point.
    """
    config = config or SolverConfig()
    sc = config.shooting
    zeta_tol = sc.zeta_tol if zeta_tol is None else zeta_tol
    if not zeta_tol > 0:
        raise DomainError("zeta_tol must be positive")
    model = problem.model
    r_max = _resolve_rmax(problem, r_max, config)
    dtol = decay_tol(model, config)
    if plus is None:
        plus_c = _plus_seed(problem, k, r_max, config)
    else:
        plus_c = _classify_safe(problem, plus, r_max, config)
    source = "given"
    if minus is None:
        seed = seed_minus(problem, k, rho, config, r_max)
        minus_c, source = seed.classification, seed.source
    else:
        minus_c = _classify_safe(problem, minus, r_max, config)
    plus_c, minus_c = _expand(problem, k, plus_c, minus_c, r_max, config)

    undetermined = None
    n = 0
    while n < sc.max_bisections:
        lo, hi = plus_c.zeta, minus_c.zeta
        width = _gap(lo, hi)
        tight = width <= zeta_tol * max(1.0, abs(lo))
        if tight and plus_c.u_end < dtol:
            break
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        c = _classify_safe(problem, mid, r_max, config)
        retries = 0
        while c.verdict is Verdict.FAILED and retries < sc.midpoint_retries:
            retries += 1
            shifted = mid + (hi - lo) * 0.25 * (-1) ** retries / retries
            c = _classify_safe(problem, shifted, r_max, config)
        n += 1
        if c.verdict is Verdict.PLUS:
            plus_c = c
        elif c.verdict is Verdict.MINUS:
            minus_c = c
        elif c.verdict is Verdict.UNDETERMINED:
            undetermined = c
            break
        else:
            raise NumericalFailure(f"bisection midpoint {mid!r} failed repeatedly",
                                   {"zeta": mid, "verdict": c.verdict.value, **c.detail})

    if undetermined is not None:
        profile, zstar = undetermined.trajectory, undetermined.zeta
        term_h = float(profile.u[-1])
    else:
        profile, zstar = plus_c.trajectory, 0.5 * (plus_c.zeta + minus_c.zeta)
        term_h = float(plus_c.u_end)
    res = energy_residual(problem, profile)
    return GroundState(
        k=k, zeta_star=float(zstar), lam=float(problem.lam), profile=profile,
        bracket=(plus_c.zeta, minus_c.zeta), bracket_width=_gap(plus_c.zeta, minus_c.zeta),
        energy_residual=res, energy_budget=energy_budget(problem),
        terminal_height=term_h, decay_tol=dtol, plus_radius=plus_c.radius,
        minus_radius=minus_c.radius, bisections=n, minus_source=source,
        profile_model_zeros=model_zeros(model))


def require_decay(gs):
    """Return ``gs`` if it decayed, otherwise raise :class:`NonDecayingBoundary`."""
    if not gs.decayed:
        raise NonDecayingBoundary(
            f"hump {gs.k}: the Plus/Minus boundary at zeta = {gs.zeta_star!r} levels off at "
            f"u = {gs.terminal_height!r} (nearest zero of f: {gs.limit!r}) instead of "
            f"decaying below {gs.decay_tol!r}", gs)
    return gs


def _hump_attempt(problem, k, config, rho, cross_check):
    try:
        gs = require_decay(find_ground_state(problem, k, config=config, rho=rho))
    except (MultiplicityNotReached, BracketInvalid, NumericalFailure, NonDecayingBoundary) as exc:
        return k, None, exc
    if cross_check and gs.minus_source != "scan":
        # a second bisection from the scan seed; disagreement is reported, not resolved
        try:
            scan = seed_minus(problem, k, config=config, use_variational=False)
            other = find_ground_state(problem, k, config=config, minus=scan.zeta)
            tol = 10.0 * config.shooting.zeta_tol * max(1.0, gs.zeta_star)
            if abs(other.zeta_star - gs.zeta_star) > tol:
                gs = replace(gs, alternates=(other.zeta_star,))
        except MGSError:
            pass
    return k, gs, None


def solve_multiplicity(problem, config=None, rho=None, cross_check=False):
    """One ground state per hump, sorted by ``zeta_star``.

    Raises :class:`MultiplicityNotReached` listing the humps that failed and
    carrying the ground states that succeeded.
    """
    config = config or SolverConfig()
    ks = list(range(1, problem.model.n + 1))
    attempts = _pool_map(lambda k: _hump_attempt(problem, k, config, rho, cross_check), ks)
    ok = [gs for _, gs, _ in attempts if gs is not None]
    failed = {k: exc for k, gs, exc in attempts if gs is None}
    boundaries = [exc.ground_state for exc in failed.values()
                  if isinstance(exc, NonDecayingBoundary)]
    ok.sort(key=lambda gs: gs.zeta_star)
    zs = [gs.zeta_star for gs in ok]
    if any(b <= a for a, b in zip(zs, zs[1:])):
        raise NumericalFailure("ground state heights are not distinct", {"zeta_star": zs})
    if failed:
        msg = "; ".join(f"hump {k}: {exc}" for k, exc in sorted(failed.items()))
        raise MultiplicityNotReached(
            f"{len(failed)} of {len(ks)} humps without a ground state at lambda = "
            f"{problem.lam!r} ({msg})",
            lam=problem.lam, succeeded=[gs.k for gs in ok], failed=sorted(failed), partial=ok,
            boundaries=boundaries, reasons={k: str(exc) for k, exc in failed.items()})
    return ok


@dataclass(frozen=True)
class ThresholdResult:
    """Bracket on lambda where hump ``k`` switches between failure and success."""

    k: int
    value: float
    bracket: tuple
    success_side: str
    samples: tuple

    def __float__(self):
        return self.value

    @property
    def success_lambda(self):
        return self.bracket[0] if self.success_side == "low" else self.bracket[1]

    def to_dict(self):
        return {"k": self.k, "lambda": self.value, "bracket": list(self.bracket),
                "success_side": self.success_side,
                "samples": [{"lambda": lam, "success": ok} for lam, ok in self.samples]}


def lambda_succeeds(problem, k, lam, config=None):
    """Whether a decayed ground state for hump ``k`` is found at ``lam``."""
    try:
        require_decay(find_ground_state(problem.with_lambda(lam), k, config=config))
        return True
    except (MultiplicityNotReached, BracketInvalid, NumericalFailure, NonDecayingBoundary):
        return False


def find_lambda_threshold(problem, k, lambda_range, steps=20, config=None):
    """Locate where the success predicate flips on ``lambda_range``.

    Probes ``threshold_probes`` geometrically spaced values first and refuses
    to bisect a predicate that flips more than once; either end may be the
    successful one.
    """
    config = config or SolverConfig()
    lo, hi = float(lambda_range[0]), float(lambda_range[1])
    if not 0 < lo < hi:
        raise DomainError("lambda_range must satisfy 0 < lo < hi")
    probes = np.geomspace(lo, hi, max(2, config.shooting.threshold_probes))
    samples = [(float(lam), lambda_succeeds(problem, k, lam, config)) for lam in probes]
    outcomes = [ok for _, ok in samples]
    if outcomes[0] == outcomes[-1]:
        raise ThresholdError(
            f"hump {k}: both ends of {lambda_range} {'succeed' if outcomes[0] else 'fail'}; "
            "no threshold inside the range", samples)
    flips = sum(a != b for a, b in zip(outcomes, outcomes[1:]))
    if flips > 1:
        raise ThresholdError(f"hump {k}: success is not monotone across {lambda_range}", samples)
    j = next(i for i in range(len(outcomes) - 1) if outcomes[i] != outcomes[i + 1])
    a, b = samples[j][0], samples[j + 1][0]
    ok_a = outcomes[j]
    for _ in range(steps):
        mid = 0.5 * (a + b)
        ok = lambda_succeeds(problem, k, mid, config)
        samples.append((mid, ok))
        if ok == ok_a:
            a = mid
        else:
            b = mid
    samples.sort()
    return ThresholdResult(k, 0.5 * (a + b), (a, b), "low" if outcomes[0] else "high",
                           tuple(samples))
