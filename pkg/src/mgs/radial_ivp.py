"""Radial initial value problem in flux coordinates.

The radial equation ``(r^{N-1} phi'(u'))' = -r^{N-1} lam f(u)`` is integrated
as the first-order system

    u' = q / sqrt(1 + q^2)
    q' = -(N - 1) q / r - lam f(u)
    E' = q^2 / (r sqrt(1 + q^2))

with ``q = phi'(u') = u'/sqrt(1 - u'^2)``. In these coordinates the slope
bound ``|u'| < 1`` holds by construction, and ``E`` carries the dissipated
energy ``int_0^r u'^2 / (s sqrt(1 - u'^2)) ds``.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import _kernels as K
from .config import Tolerances
from .errors import AssumptionViolation, DomainError
from .nonlinearity import eval_F, eval_f, verify_assumptions


def phi_prime(p):
    """Flux of a slope: ``p / sqrt(1 - p^2)`` for ``|p| < 1``."""
    arr = np.asarray(p, dtype=float)
    if np.any(~(np.abs(arr) < 1.0)):
        raise DomainError("phi_prime: slope must satisfy |p| < 1")
    out = arr / np.sqrt((1.0 - arr) * (1.0 + arr))
    return float(out) if out.ndim == 0 else out


def phi_prime_inv(q):
    """Slope of a flux: ``q / sqrt(1 + q^2)``, always inside (-1, 1)."""
    arr = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("phi_prime_inv: flux must be finite")
    out = arr / np.sqrt(1.0 + arr * arr)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ShootingProblem:
    N: int
    lam: float
    model: object
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise DomainError(f"dimension N must be an integer >= 2, got {self.N}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise DomainError(f"lambda must be positive and finite, got {self.lam}")
        if self.check:
            report = verify_assumptions(self.model, self.N)
            if not report.all_passed:
                bad = [e.assumption for e in report.entries if e.passed is False]
                raise AssumptionViolation(f"model fails {bad} for N = {self.N}")

    def with_lambda(self, lam):
        return ShootingProblem(self.N, lam, self.model, check=False)


class Terminal(str, enum.Enum):
    SLOPE_VANISHED = "SlopeVanished"
    HEIGHT_VANISHED = "HeightVanished"
    REACHED_RMAX = "ReachedRmax"
    EQUILIBRIUM = "Equilibrium"
    STEP_FAILURE = "StepFailure"


@dataclass(frozen=True)
class TrajectoryState:
    r: float
    u: float
    q: float
    E: float

    @property
    def uprime(self):
        return self.q / math.sqrt(1.0 + self.q * self.q)


@dataclass(frozen=True)
class TerminalEvent:
    kind: Terminal
    radius: float
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Trajectory:
    zeta: float
    r: np.ndarray
    u: np.ndarray
    q: np.ndarray
    E: np.ndarray
    terminal: TerminalEvent
    n_steps: int = 0
    n_rejected: int = 0

    def __len__(self):
        return self.r.size

    def __getitem__(self, i):
        return TrajectoryState(float(self.r[i]), float(self.u[i]), float(self.q[i]), float(self.E[i]))

    def states(self):
        return [self[i] for i in range(len(self))]

    @property
    def uprime(self):
        return self.q / np.sqrt(1.0 + self.q * self.q)

    @property
    def H(self):
        return np.sqrt(1.0 + self.q * self.q) - 1.0

    @property
    def final(self):
        return self[-1]

    @property
    def min_gradient_gap(self):
        """``min sqrt(1 - u'^2)`` along the samples: the realized slope margin."""
        return float(np.min(1.0 / np.sqrt(1.0 + self.q * self.q)))

    def to_csv(self, fh=None):
        buf = fh or io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "u", "uprime", "q", "E"])
        for row in zip(self.r, self.u, self.uprime, self.q, self.E):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue() if fh is None else None

    def summary(self):
        t = self.terminal
        return {
            "zeta": self.zeta,
            "terminal": t.kind.value,
            "radius": t.radius,
            "detail": t.detail,
            "final": {"r": float(self.r[-1]), "u": float(self.u[-1]),
                      "uprime": float(self.uprime[-1]), "E": float(self.E[-1])},
            "samples": len(self),
            "steps": self.n_steps,
            "rejected": self.n_rejected,
            "min_gradient_gap": self.min_gradient_gap,
        }

    def to_json(self):
        return json.dumps(self.summary(), sort_keys=True)


def default_r0(zeta):
    return 1e-6 * max(1.0, zeta)


def default_r_max(problem):
    return 1e4 * problem.model.finite_top() * max(1.0, problem.lam ** -0.5)


def taylor_start(problem, zeta, r0=None):
    """State at a small radius ``r0``, skipping the 1/r singularity at 0.

    Uses the flux of the equation with f frozen at f(zeta):
    ``q(r0) = -lam f(zeta) r0 / N``, and the height and dissipation obtained
    by integrating that flux exactly. To leading order this is
    ``u(r0) = zeta - lam f(zeta) r0^2 / (2N)``. Returns ``None`` when
    ``f(zeta) = 0`` (the constant solution).
    """
    if not zeta > 0:
        raise DomainError("initial height zeta must be positive")
    r0 = default_r0(zeta) if r0 is None else float(r0)
    if not r0 > 0:
        raise DomainError("r0 must be positive")
    fz = eval_f(problem.model, zeta)
    if fz == 0.0:
        return None
    return TrajectoryState(r0, *_start_values(problem.N, problem.lam, fz, zeta, r0))


def _start_values(N, lam, fz, zeta, r0):
    a = lam * fz * r0 / N
    lift = math.hypot(1.0, a) - 1.0
    # N*lift/(lam*fz) loses digits when a is tiny; use the series there
    drop = (lam * fz * r0 * r0 / (2.0 * N)) * (1.0 - a * a / 4.0) if abs(a) < 1e-4 else N * lift / (lam * fz)
    return zeta - drop, -a, (a * a / 2.0) * (1.0 - a * a / 4.0) if abs(a) < 1e-4 else lift


# -- compiled integrator --------------------------------------------------

CODE_RMAX, CODE_SLOPE, CODE_HEIGHT, CODE_FAIL, CODE_AMBIGUOUS = 0, 1, 2, 3, 4

_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40


@njit(cache=True, inline="always")
def _rhs(kind, params, cap, nm1, lam, r, u, q):
    s = math.sqrt(1.0 + q * q)
    return q / s, -nm1 * q / r - lam * K.f_scalar(kind, params, cap, u), q * q / (r * s)


@njit(cache=True)
def _dp_step(kind, params, cap, nm1, lam, r, y0, y1, y2, k1u, k1q, k1e, h):
    """One Dormand-Prince step; returns the 5th-order state, error and FSAL slope."""
    k2u, k2q, k2e = _rhs(kind, params, cap, nm1, lam, r + h / 5,
                         y0 + h * _A21 * k1u, y1 + h * _A21 * k1q)
    k3u, k3q, k3e = _rhs(kind, params, cap, nm1, lam, r + 3 * h / 10,
                         y0 + h * (_A31 * k1u + _A32 * k2u),
                         y1 + h * (_A31 * k1q + _A32 * k2q))
    k4u, k4q, k4e = _rhs(kind, params, cap, nm1, lam, r + 4 * h / 5,
                         y0 + h * (_A41 * k1u + _A42 * k2u + _A43 * k3u),
                         y1 + h * (_A41 * k1q + _A42 * k2q + _A43 * k3q))
    k5u, k5q, k5e = _rhs(kind, params, cap, nm1, lam, r + 8 * h / 9,
                         y0 + h * (_A51 * k1u + _A52 * k2u + _A53 * k3u + _A54 * k4u),
                         y1 + h * (_A51 * k1q + _A52 * k2q + _A53 * k3q + _A54 * k4q))
    k6u, k6q, k6e = _rhs(kind, params, cap, nm1, lam, r + h,
                         y0 + h * (_A61 * k1u + _A62 * k2u + _A63 * k3u + _A64 * k4u + _A65 * k5u),
                         y1 + h * (_A61 * k1q + _A62 * k2q + _A63 * k3q + _A64 * k4q + _A65 * k5q))
    n0 = y0 + h * (_B1 * k1u + _B3 * k3u + _B4 * k4u + _B5 * k5u + _B6 * k6u)
    n1 = y1 + h * (_B1 * k1q + _B3 * k3q + _B4 * k4q + _B5 * k5q + _B6 * k6q)
    n2 = y2 + h * (_B1 * k1e + _B3 * k3e + _B4 * k4e + _B5 * k5e + _B6 * k6e)
    k7u, k7q, k7e = _rhs(kind, params, cap, nm1, lam, r + h, n0, n1)
    e0 = h * (_E1 * k1u + _E3 * k3u + _E4 * k4u + _E5 * k5u + _E6 * k6u + _E7 * k7u)
    e1 = h * (_E1 * k1q + _E3 * k3q + _E4 * k4q + _E5 * k5q + _E6 * k6q + _E7 * k7q)
    e2 = h * (_E1 * k1e + _E3 * k3e + _E4 * k4e + _E5 * k5e + _E6 * k6e + _E7 * k7e)
    return n0, n1, n2, e0, e1, e2, k7u, k7q, k7e


@njit(cache=True)
def _locate(kind, params, cap, nm1, lam, r, y0, y1, y2, k1u, k1q, k1e, h, which, tol):
    """Bisect the sub-step length until the event brackets to ``tol``.

    ``which`` is 1 for q crossing 0 upward, 2 for u crossing 0 downward.
    Returns the sub-step at which the event has just occurred and the state.
    """
    lo, hi = 0.0, h
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        s0, s1, s2, a, b, c, d, e, g = _dp_step(kind, params, cap, nm1, lam, r, y0, y1, y2,
                                                k1u, k1q, k1e, mid)
        crossed = s1 >= 0.0 if which == 1 else s0 <= 0.0
        if crossed:
            hi = mid
        else:
            lo = mid
    s0, s1, s2, a, b, c, d, e, g = _dp_step(kind, params, cap, nm1, lam, r, y0, y1, y2,
                                            k1u, k1q, k1e, hi)
    return hi, s0, s1, s2


@njit(cache=True, nogil=True)
def integrate_kernel(kind, params, cap, N, lam, r0, u0, q0, E0, r_max,
                     rtol, atol, event_tol, event_floor, max_steps):
    nm1 = float(N - 1)
    cap_n = 1024
    rs = np.empty(cap_n)
    us = np.empty(cap_n)
    qs = np.empty(cap_n)
    es = np.empty(cap_n)
    rs[0], us[0], qs[0], es[0] = r0, u0, q0, E0
    n = 1
    r, y0, y1, y2 = r0, u0, q0, E0
    k1u, k1q, k1e = _rhs(kind, params, cap, nm1, lam, r, y0, y1)
    h = min(r0, r_max - r0)
    code = CODE_RMAX
    ev_r = r_max
    steps = 0
    rejected = 0
    while True:
        if steps >= max_steps:
            code = CODE_FAIL
            ev_r = r
            break
        clamped = r + h >= r_max
        if clamped:
            h = r_max - r
        if h <= 1e-14 * max(1.0, r):
            code = CODE_FAIL
            ev_r = r
            break
        n0, n1, n2, e0, e1, e2, k7u, k7q, k7e = _dp_step(kind, params, cap, nm1, lam, r,
                                                         y0, y1, y2, k1u, k1q, k1e, h)
        sc0 = atol + rtol * max(abs(y0), abs(n0))
        sc1 = atol + rtol * max(abs(y1), abs(n1))
        sc2 = atol + rtol * max(abs(y2), abs(n2))
        err = max(abs(e0) / sc0, abs(e1) / sc1, abs(e2) / sc2)
        if not (err == err) or not math.isfinite(n0 + n1 + n2):
            h *= 0.1
            rejected += 1
            steps += 1
            continue
        if err > 1.0:
            h *= max(0.2, 0.9 * err ** -0.2)
            rejected += 1
            steps += 1
            continue
        steps += 1
        slope_ev = y1 < 0.0 and n1 >= 0.0
        height_ev = y0 > 0.0 and n0 <= 0.0
        if slope_ev or height_ev:
            tol = event_tol * max(1.0, r)
            hs = h + 1.0
            hh = h + 1.0
            if slope_ev:
                hs, s0, s1, s2 = _locate(kind, params, cap, nm1, lam, r, y0, y1, y2,
                                         k1u, k1q, k1e, h, 1, tol)
            if height_ev:
                hh, t0, t1, t2 = _locate(kind, params, cap, nm1, lam, r, y0, y1, y2,
                                         k1u, k1q, k1e, h, 2, tol)
            if slope_ev and height_ev and abs(hs - hh) <= 10.0 * tol:
                code = CODE_AMBIGUOUS
                ev_r = r + min(hs, hh)
                n0, n1, n2 = t0, t1, t2
            elif hs < hh:
                code = CODE_SLOPE if s0 > event_floor else CODE_AMBIGUOUS
                ev_r = r + hs
                n0, n1, n2 = s0, s1, s2
            else:
                code = CODE_HEIGHT
                ev_r = r + hh
                n0, n1, n2 = t0, t1, t2
            r = ev_r
        else:
            r = r_max if clamped else r + h
        if n >= rs.shape[0]:
            rs = _grow(rs)
            us = _grow(us)
            qs = _grow(qs)
            es = _grow(es)
        rs[n], us[n], qs[n], es[n] = r, n0, n1, n2
        n += 1
        if code != CODE_RMAX or r >= r_max:
            break
        y0, y1, y2 = n0, n1, n2
        k1u, k1q, k1e = k7u, k7q, k7e
        fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        h *= fac
    return rs[:n].copy(), us[:n].copy(), qs[:n].copy(), es[:n].copy(), code, ev_r, steps, rejected


@njit(cache=True)
def _grow(a):
    out = np.empty(2 * a.shape[0])
    out[:a.shape[0]] = a
    return out


def integrate(problem, zeta, r_max=None, tol=None):
    """Integrate from the series start until the first terminal event.

    Stops at the first of: q crossing 0 upward with u above the event floor
    (``SlopeVanished``), u crossing 0 (``HeightVanished``), or ``r_max``
    (``ReachedRmax``). A constant solution is reported as ``Equilibrium``.
    """
    tol = tol or Tolerances()
    zeta = float(zeta)
    if not (zeta > 0 and math.isfinite(zeta)):
        raise DomainError("initial height zeta must be positive and finite")
    r_max = float(r_max if r_max is not None else (tol.r_max or default_r_max(problem)))
    if not r_max > 0:
        raise DomainError("r_max must be positive")
    start = taylor_start(problem, zeta, tol.r0)
    if start is None:
        r0 = tol.r0 or default_r0(zeta)
        z = np.zeros(2)
        return Trajectory(zeta, np.array([r0, max(r_max, r0)]), np.full(2, zeta), z, z.copy(),
                          TerminalEvent(Terminal.EQUILIBRIUM, math.inf))
    return integrate_from(problem, start, r_max, tol, zeta)


def integrate_from(problem, state, r_max, tol=None, zeta=None):
    """Integrate from an arbitrary state (used for restarts along a profile)."""
    tol = tol or Tolerances()
    if not state.r < r_max:
        raise DomainError("r_max must exceed the start radius")
    model = problem.model
    rs, us, qs, es, code, ev_r, steps, rejected = integrate_kernel(
        model.kind, model.kernel_params, model.cap, int(problem.N), float(problem.lam),
        float(state.r), float(state.u), float(state.q), float(state.E), float(r_max),
        tol.rel, tol.abs, tol.event, tol.event_floor, int(tol.max_steps))
    if code == CODE_RMAX:
        term = TerminalEvent(Terminal.REACHED_RMAX, float(r_max))
    elif code == CODE_SLOPE:
        term = TerminalEvent(Terminal.SLOPE_VANISHED, ev_r)
    elif code == CODE_HEIGHT:
        term = TerminalEvent(Terminal.HEIGHT_VANISHED, ev_r)
    elif code == CODE_AMBIGUOUS:
        term = TerminalEvent(Terminal.STEP_FAILURE, ev_r,
                             {"reason": "ambiguous", "u": float(us[-1]), "q": float(qs[-1])})
    else:
        reason = "max_steps" if steps >= tol.max_steps else "step_underflow"
        term = TerminalEvent(Terminal.STEP_FAILURE, ev_r,
                             {"reason": reason, "u": float(us[-1]), "q": float(qs[-1])})
    zeta = float(us[0]) if zeta is None else zeta
    return Trajectory(zeta, rs, us, qs, es, term, int(steps), int(rejected))


def energy_residual(problem, traj, zeta=None):
    """Worst violation of the energy identity along the samples.

    ``max |H(u') + (N-1) E - lam (F(zeta) - F(u))|`` with
    ``H = sqrt(1 + q^2) - 1``.
    """
    zeta = traj.zeta if zeta is None else zeta
    if traj.terminal.kind is Terminal.EQUILIBRIUM:
        return 0.0
    drop = problem.lam * (eval_F(problem.model, zeta) - eval_F(problem.model, traj.u))
    res = traj.H + (problem.N - 1) * traj.E - drop
    return float(np.max(np.abs(res)))


def energy_budget(problem, top=None):
    """``1 + lam max|F|`` over ``[0, top]``: the scale the residual is judged against."""
    top = problem.model.finite_top() if top is None else top
    grid = np.linspace(0.0, top, 4097)
    return 1.0 + problem.lam * float(np.max(np.abs(eval_F(problem.model, grid))))
