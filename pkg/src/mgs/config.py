"""Tolerances and defaults, grouped by the stage that consumes them."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, replace


@dataclass(frozen=True)
class StructureConfig:
    scan_points: int = 4096
    root_tol: float = 1e-12
    quad_rtol: float = 1e-10
    a5_offsets: tuple = (1e-3, 1e-4, 1e-5)
    a5_floor: float = 1e-8
    # quotient at the smallest offset must keep this fraction of the largest one
    a5_trend: float = 0.5
    gamma_fraction: float = 0.5


@dataclass(frozen=True)
class Tolerances:
    """ODE controls for one trajectory.

    ``r0`` and ``r_max`` default to problem-dependent values when left as
    ``None`` (see :func:`mgs.radial_ivp.default_r0` and
    :func:`mgs.radial_ivp.default_r_max`).
    """

    rel: float = 1e-10
    abs: float = 1e-12
    event: float = 1e-12
    event_floor: float = 1e-10
    r0: float | None = None
    r_max: float | None = None
    max_steps: int = 2_000_000


@dataclass(frozen=True)
class ShootingConfig:
    zeta_tol: float = 1e-12
    decay_factor: float = 1e-4
    # absolute override of decay_factor * beta_1
    decay_tol: float | None = None
    max_bisections: int = 200
    max_expansions: int = 12
    midpoint_retries: int = 3
    scan_points: int = 4096
    threshold_probes: int = 5


@dataclass(frozen=True)
class VariationalConfig:
    rho_factor: float = 8.0
    mesh: int = 1024
    opt_tol: float = 1e-10
    max_iters: int = 2000
    armijo: float = 1e-4
    backtrack: float = 0.5
    # slope of the steep multistart ramp, inside the unit cone
    steep_slope: float = 0.9


@dataclass(frozen=True)
class SolverConfig:
    structure: StructureConfig = field(default_factory=StructureConfig)
    ode: Tolerances = field(default_factory=Tolerances)
    shooting: ShootingConfig = field(default_factory=ShootingConfig)
    variational: VariationalConfig = field(default_factory=VariationalConfig)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = data or {}
        return cls(
            structure=_build(StructureConfig, data.get("structure")),
            ode=_build(Tolerances, data.get("ode")),
            shooting=_build(ShootingConfig, data.get("shooting")),
            variational=_build(VariationalConfig, data.get("variational")),
        )

    def with_ode(self, **kw):
        return replace(self, ode=replace(self.ode, **kw))


def _build(cls, data):
    data = dict(data or {})
    if "a5_offsets" in data:
        data["a5_offsets"] = tuple(data["a5_offsets"])
    return cls(**data)


DEFAULT = SolverConfig()


def worker_count():
    """Worker pool size, capped by ``MGS_THREADS`` when set."""
    cpus = os.cpu_count() or 1
    raw = os.environ.get("MGS_THREADS")
    if raw:
        try:
            return max(1, min(cpus, int(raw)))
        except ValueError:
            pass
    return cpus
