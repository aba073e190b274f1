"""The nonlinearity f, its antiderivative F, and their sign structure.

A model stores f in one of three forms (polynomial coefficients, factored
roots, or a piecewise-linear table) together with the points where f and F
change sign:

* ``alphas``: where f goes from negative to positive,
* ``betas``: where f goes from positive to negative (``inf`` closes a last
  hump that never turns down),
* ``xis``: the zero of F inside each hump,
* ``gammas``: heights inside ``(xi_i, beta_i)`` with ``F > 0``, used for
  plateau test profiles.

f is always taken as 0 for ``s <= 0``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels as K
from .config import StructureConfig
from .errors import AssumptionViolation, DomainError, QuadratureError, StructureError

FORMS = ("polynomial", "factored", "piecewise_linear")


@dataclass(frozen=True)
class NonlinearityModel:
    form: str
    params: tuple
    cap: float = math.inf
    alphas: tuple = ()
    betas: tuple = ()
    xis: tuple = ()
    gammas: tuple = ()
    search_max: float = math.nan
    source: dict = field(default_factory=dict, compare=False)

    @property
    def n(self):
        return len(self.alphas)

    @property
    def kind(self):
        return FORMS.index(self.form)

    @property
    def kernel_params(self):
        return np.asarray(self.params, dtype=float)

    @property
    def tail_hump(self):
        """True when the last hump is of the (A2)' shape (no upper turning point)."""
        return bool(self.betas) and math.isinf(self.betas[-1])

    @property
    def truncated(self):
        return not math.isinf(self.cap)

    def bounds(self, k):
        """The hump interval ``(alpha_k, beta_k)`` for 1-based ``k``."""
        _check_index(self, k)
        return self.alphas[k - 1], self.betas[k - 1]

    def finite_top(self):
        """Largest finite sign-change point; stands in for beta_n under (A2)'."""
        finite = [b for b in self.betas if math.isfinite(b)]
        return max(finite + list(self.alphas))

    # -- construction ------------------------------------------------------

    @classmethod
    def polynomial(cls, coefficients, config=None, **kw):
        c = np.trim_zeros(np.asarray(coefficients, dtype=float), "b")
        if c.size == 0:
            raise DomainError("polynomial needs at least one nonzero coefficient")
        src = {"type": "polynomial", "coefficients": [float(x) for x in coefficients]}
        return cls._build("polynomial", tuple(c), src, config, **kw)

    @classmethod
    def factored(cls, roots, scale=1.0, config=None, **kw):
        roots = [float(r) for r in roots]
        if not roots:
            raise DomainError("factored form needs at least one root")
        src = {"type": "factored", "roots": roots, "scale": float(scale)}
        return cls._build("factored", (float(scale), *roots), src, config, **kw)

    @classmethod
    def piecewise_linear(cls, knots, values, config=None, **kw):
        x = np.asarray(knots, dtype=float)
        y = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise DomainError("knots and values must be equal-length 1-D arrays (>= 2 entries)")
        if np.any(np.diff(x) <= 0):
            raise DomainError("knots must be strictly increasing")
        if x[0] != 0.0 or y[0] != 0.0:
            raise DomainError("piecewise-linear f must start at the knot (0, 0)")
        src = {"type": "piecewise_linear", "knots": x.tolist(), "values": y.tolist()}
        return cls._build("piecewise_linear", (float(x.size), *x, *y), src, config, **kw)

    @classmethod
    def from_dict(cls, data, config=None, **kw):
        if not isinstance(data, dict) or "type" not in data:
            raise DomainError("model must be a JSON object with a 'type' field")
        kind = data["type"]
        if "gamma_fraction" in data:
            kw.setdefault("gamma_fraction", data["gamma_fraction"])
        if kind == "polynomial":
            coeffs = data.get("coefficients")
            if not coeffs:
                raise DomainError("polynomial model: 'coefficients' is missing or empty")
            return cls.polynomial(coeffs, config, **kw)
        if kind == "factored":
            if not data.get("roots"):
                raise DomainError("factored model: 'roots' is missing or empty")
            return cls.factored(data["roots"], data.get("scale", 1.0), config, **kw)
        if kind == "piecewise_linear":
            return cls.piecewise_linear(data["knots"], data["values"], config, **kw)
        raise DomainError(f"unknown model type {kind!r}")

    @classmethod
    def from_json(cls, path, config=None, **kw):
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DomainError(f"cannot read model file {path}: {exc.strerror}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DomainError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(data, config, **kw)

    @classmethod
    def _build(cls, form, params, source, config, search_max=None, gamma_fraction=None,
               detect=True):
        config = config or StructureConfig()
        model = cls(form=form, params=params, source=source)
        smax = float(search_max) if search_max is not None else _default_search_max(model)
        model = replace(model, search_max=smax)
        if not detect:
            return model
        alphas, betas = detect_sign_structure(model, smax, config)
        if len(betas) < len(alphas):
            betas = betas + [math.inf]
        model = replace(model, alphas=tuple(alphas), betas=tuple(betas))
        frac = config.gamma_fraction if gamma_fraction is None else float(gamma_fraction)
        xis, gammas = [], []
        for k in range(1, model.n + 1):
            try:
                xi = find_xi(model, k, config)
            except AssumptionViolation:
                xis.append(math.nan)
                gammas.append(math.nan)
                continue
            xis.append(xi)
            gammas.append(_gamma(xi, model.betas[k - 1], frac))
        return replace(model, xis=tuple(xis), gammas=tuple(gammas))

    def to_dict(self):
        out = dict(self.source)
        out["structure"] = {
            "alphas": list(self.alphas),
            "betas": [b if math.isfinite(b) else "inf" for b in self.betas],
            "xis": list(self.xis),
            "gammas": list(self.gammas),
            "cap": self.cap if math.isfinite(self.cap) else "inf",
        }
        return out


def _gamma(xi, beta, frac):
    if math.isfinite(beta):
        return xi + frac * (beta - xi)
    return xi * (1.0 + frac)


def _check_index(model, k):
    if not 1 <= k <= model.n:
        raise DomainError(f"hump index {k} outside 1..{model.n}")


def _default_search_max(model):
    if model.form == "factored":
        pos = [r for r in model.params[1:] if r > 0]
        return 1.25 * max(pos, default=1.0) + 1.0
    if model.form == "polynomial":
        c = np.asarray(model.params)
        if c.size <= 1:
            return 10.0
        roots = np.roots(c[::-1])
        return 1.25 * float(np.max(np.abs(roots))) + 1.0
    m = int(model.params[0])
    xs = np.asarray(model.params[1:1 + m])
    ys = np.asarray(model.params[1 + m:])
    slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    reach = abs(ys[-1] / slope) if slope != 0 else 0.0
    return 1.25 * (xs[-1] + reach) + 1.0


# -- evaluation -----------------------------------------------------------


def eval_f(model, s):
    """f(s), with f = 0 on ``s <= 0``. Accepts scalars or arrays."""
    arr = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("eval_f: argument must be finite")
    if arr.ndim == 0:
        return float(K.f_scalar(model.kind, model.kernel_params, model.cap, float(arr)))
    flat = K.f_array(model.kind, model.kernel_params, model.cap, arr.ravel())
    return flat.reshape(arr.shape)


def _poly_coeffs(model):
    if model.form == "polynomial":
        return np.asarray(model.params, dtype=float)
    scale, roots = model.params[0], model.params[1:]
    return scale * np.poly(roots)[::-1]


def _antiderivative_coeffs(model):
    c = _poly_coeffs(model)
    return np.concatenate([[0.0], c / np.arange(1, c.size + 1)])


def _base_F(model, u, config):
    """Untruncated F at points ``u`` (array, clipped at 0 by the caller)."""
    if model.form in ("polynomial", "factored"):
        return K.poly_array(_antiderivative_coeffs(model), u)
    return _quad_F(model, u, config)


def eval_F(model, u, config=None):
    """F(u) = integral of f over [0, u]; closed form or adaptive Simpson.

    Accepts scalars or arrays. For a truncated model the integral continues
    linearly with slope f(cap) above the cap.
    """
    config = config or StructureConfig()
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("eval_F: argument must be finite")
    flat = np.maximum(arr.ravel(), 0.0)
    if model.truncated:
        below = np.minimum(flat, model.cap)
        out = _base_F(model, below, config)
        over = flat - below
        if np.any(over > 0):
            out = out + eval_f(model, model.cap) * over
    else:
        out = _base_F(model, flat, config)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def _breakpoints(model):
    pts = list(model.alphas) + [b for b in model.betas if math.isfinite(b)]
    if model.form == "piecewise_linear":
        m = int(model.params[0])
        pts += list(model.params[1:1 + m])
    return np.unique(np.asarray([p for p in pts if p > 0], dtype=float))


def _quad_F(model, u, config):
    # integrate between sorted query points so each stretch is done once
    order = np.argsort(u)
    nodes = np.concatenate([[0.0], u[order]])
    brk = _breakpoints(model)
    raw = replace(model, cap=math.inf)
    acc = np.empty(nodes.size - 1)
    total = 0.0
    for j in range(1, nodes.size):
        a, b = nodes[j - 1], nodes[j]
        if b > a:
            inner = brk[(brk > a) & (brk < b)]
            edges = np.concatenate([[a], inner, [b]])
            for lo, hi in zip(edges[:-1], edges[1:]):
                total += adaptive_simpson(lambda s: eval_f(raw, s), lo, hi, config.quad_rtol)
        acc[j - 1] = total
    out = np.empty_like(acc)
    out[order] = acc
    return out


def adaptive_simpson(fn, a, b, rtol, max_depth=48):
    """Adaptive Simpson quadrature of a scalar function on ``[a, b]``."""
    if b == a:
        return 0.0
    fa, fm, fb = fn(a), fn(0.5 * (a + b)), fn(b)
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    scale = abs(b - a) * max(abs(fa), abs(fm), abs(fb), 1e-300)
    tol = max(rtol * scale, 1e-300)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = fn(lm), fn(rm)
        left = (m - a) * (fa + 4.0 * flm + fm) / 6.0
        right = (b - m) * (fm + 4.0 * frm + fb) / 6.0
        delta = left + right - whole
        if abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        if depth <= 0:
            raise QuadratureError(f"adaptive Simpson did not converge on [{a}, {b}]", (a, b))
        return (rec(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))

    return rec(a, b, fa, fm, fb, whole, tol, max_depth)


# -- structure ------------------------------------------------------------


def _bisect(fn, a, b, tol):
    fa = fn(a)
    while b - a > tol * max(1.0, abs(a)):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        fm = fn(m)
        if fm == 0.0:
            return float(m)
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return float(0.5 * (a + b))


def detect_sign_structure(model, search_max, config=None):
    """Sign changes of f on ``(0, search_max]`` as ``(alphas, betas)``.

    Returns plain lists; ``betas`` is one shorter than ``alphas`` when f is
    still positive at ``search_max`` (the (A2)' shape). Tangential zeros are
    ignored.
    """
    config = config or StructureConfig()
    if not search_max > 0:
        raise DomainError("search_max must be positive")
    raw = replace(model, cap=math.inf)
    grid = np.linspace(0.0, float(search_max), config.scan_points + 1)[1:]
    vals = eval_f(raw, grid)
    sgn = np.sign(vals)
    nz = np.flatnonzero(sgn)
    if nz.size == 0 or not np.any(sgn > 0):
        raise StructureError("no positive hump: f is never positive on (0, search_max]")
    if sgn[nz[0]] > 0:
        raise StructureError("no negative leading interval: f > 0 immediately right of 0")
    fn = lambda s: eval_f(raw, s)
    alphas, betas = [], []
    for a_idx, b_idx in zip(nz[:-1], nz[1:]):
        if sgn[a_idx] == sgn[b_idx]:
            continue
        # a root may sit exactly on a zero-valued grid point between a_idx and b_idx
        root = _bisect(fn, grid[a_idx], grid[b_idx], config.root_tol)
        (alphas if sgn[a_idx] < 0 else betas).append(root)
    return alphas, betas


def find_xi(model, k, config=None):
    """Zero of F inside hump ``k``, by bisection."""
    config = config or StructureConfig()
    _check_index(model, k)
    a, b = model.alphas[k - 1], model.betas[k - 1]
    raw = replace(model, cap=math.inf)
    Fa = eval_F(raw, a, config)
    if not Fa < 0:
        raise AssumptionViolation(f"F(alpha_{k}) = {Fa:.6g} is not negative; no zero of F in hump {k}")
    if math.isinf(b):
        b = max(2.0 * a, 1.0)
        for _ in range(200):
            if eval_F(raw, b, config) > 0:
                break
            b *= 2.0
    Fb = eval_F(raw, b, config)
    if not Fb > 0:
        raise AssumptionViolation(f"F has no sign change on (alpha_{k}, beta_{k}) = ({a}, {b})")
    return _bisect(lambda s: eval_F(raw, s, config), a, b, config.root_tol)


def truncate(model, i):
    """The model frozen at ``f(beta_i)`` above ``beta_i``."""
    _check_index(model, i)
    beta = model.betas[i - 1]
    if math.isinf(beta):
        return model
    return replace(model, cap=float(beta))


# -- assumption report ----------------------------------------------------


@dataclass
class AssumptionEntry:
    assumption: str
    passed: bool | None
    detail: str

    def to_dict(self):
        return {"assumption": self.assumption, "pass": self.passed, "detail": self.detail}


@dataclass
class AssumptionReport:
    N: int
    entries: list

    def __getitem__(self, name):
        for e in self.entries:
            if e.assumption == name:
                return e
        raise KeyError(name)

    @property
    def all_passed(self):
        return all(e.passed is not False for e in self.entries)

    def to_list(self):
        return [e.to_dict() for e in self.entries]


def verify_assumptions(model, N, config=None):
    """Check (A1)-(A5) for the detected structure; failures are entries."""
    config = config or StructureConfig()
    raw = replace(model, cap=math.inf)
    entries = [_check_a1(raw, config), _check_a2(raw, config), _check_a3(raw, config),
               _check_a4(raw, config)]
    if N >= 3:
        entries.append(_check_a5(raw, config))
    else:
        entries.append(AssumptionEntry("A5", None, f"skipped: only required for N >= 3 (N = {N})"))
    return AssumptionReport(N=N, entries=entries)


def _check_a1(model, config):
    f0 = eval_f(model, 0.0)
    f0p = eval_f(model, 1e-300)
    grid = np.linspace(0.0, model.search_max, config.scan_points + 1)
    vals = eval_f(model, grid)
    lip = float(np.max(np.abs(np.diff(vals)) / np.diff(grid)))
    ok = f0 == 0.0 and abs(f0p) < 1e-200 and math.isfinite(lip)
    return AssumptionEntry("A1", ok, f"f(0) = {f0:g}; grid Lipschitz estimate {lip:.6g} on [0, {model.search_max:.6g}]")


def _check_a2(model, config):
    if model.n == 0:
        return AssumptionEntry("A2", False, "no hump detected")
    pts = [0.0]
    for a, b in zip(model.alphas, model.betas):
        pts += [a, b]
    if any(not q < p for q, p in zip(pts[:-1], pts[1:])):
        return AssumptionEntry("A2", False, f"sign-change points are not interlaced: {pts}")
    bad = []
    top = model.search_max
    for j in range(len(pts) - 1):
        lo, hi = pts[j], min(pts[j + 1], top)
        want = -1.0 if j % 2 == 0 else 1.0
        probe = np.linspace(lo, hi, 66)[1:-1]
        if not np.all(np.sign(eval_f(model, probe)) == want):
            bad.append((lo, pts[j + 1]))
    name = "A2'" if model.tail_hump else "A2"
    if bad:
        return AssumptionEntry(name, False, f"sign of f wrong on {bad}")
    return AssumptionEntry(name, True, f"alphas={list(model.alphas)} betas={_fmt(model.betas)}")


def _check_a3(model, config):
    missing = [k + 1 for k, xi in enumerate(model.xis) if not math.isfinite(xi)]
    if missing or model.n == 0:
        return AssumptionEntry("A3", False, f"no zero of F in humps {missing}")
    vals = [eval_F(model, xi, config) for xi in model.xis]
    return AssumptionEntry("A3", True, f"xis={list(model.xis)} F(xi)={vals}")


def _check_a4(model, config):
    prev = 0.0
    vals = []
    for k, b in enumerate(model.betas, start=1):
        Fb = eval_F(model, b if math.isfinite(b) else model.search_max, config)
        vals.append(Fb)
        if not prev < Fb:
            return AssumptionEntry("A4", False, f"F(beta_{k - 1}) = {prev:.6g} >= F(beta_{k}) = {Fb:.6g}")
        prev = Fb
    return AssumptionEntry("A4", True, f"F(beta_i) = {vals} strictly increasing from F(0) = 0")


def _check_a5(model, config):
    offsets = sorted(config.a5_offsets, reverse=True)
    notes = []
    ok = True

    def probe(label, point, sign):
        q = [sign * eval_f(model, point + d) / d for d in offsets]
        good = all(x > config.a5_floor for x in q) and q[-1] >= config.a5_trend * q[0]
        notes.append(f"{label}: quotients {['%.6g' % x for x in q]}")
        return good

    for i, a in enumerate(model.alphas, start=1):
        ok &= probe(f"alpha_{i}={a:.6g}", a, 1.0)
    for j, b in enumerate(model.betas[:-1], start=1):
        ok &= probe(f"beta_{j}={b:.6g}", b, -1.0)
    notes.append(f"offsets {offsets}, floor {config.a5_floor}, trend {config.a5_trend}")
    return AssumptionEntry("A5", bool(ok), "; ".join(notes))


def _fmt(vals):
    return [v if math.isfinite(v) else "inf" for v in vals]
