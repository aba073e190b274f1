import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mgs.config import VariationalConfig
from mgs.errors import ConeViolation, DomainError
from mgs.nonlinearity import NonlinearityModel, eval_F
from mgs.radial_ivp import ShootingProblem
from mgs.shooting import Verdict, classify
from mgs.variational import (VariationalProblem, center_height, check_escape, default_inits,
                             eval_J, grad_J, minimize_J, multistart, plateau_profile,
                             project_cone, steep_profile)

TWO_HUMP = NonlinearityModel.polynomial([0.0, -486.0, 729.0, -273.0, 31.0, -1.0])


def random_cone(vp, rng, spread=0.9):
    steps = rng.uniform(-spread, spread, vp.M) * vp.h
    v = np.concatenate([np.cumsum(steps[::-1])[::-1], [0.0]])
    return vp.profile(v)


@pytest.fixture(scope="module")
def small():
    return VariationalProblem(3, 1.0, 12.0, 2, TWO_HUMP, 64)


@pytest.fixture(scope="module")
def hump_results():
    out = {}
    for i in (1, 2):
        vp = VariationalProblem.default(3, 1.0, TWO_HUMP, i)
        out[i] = (vp, multistart(vp))
    return out


class TestProblem:
    def test_mesh(self, small):
        assert small.h == pytest.approx(12.0 / 64)
        assert small.nodes[-1] == pytest.approx(12.0)
        assert small.weights.shape == (64,)

    def test_default_radius(self):
        vp = VariationalProblem.default(3, 1.0, TWO_HUMP, 1)
        assert vp.rho == pytest.approx(8 * 18.0, rel=1e-12)
        assert vp.M == 1024

    @pytest.mark.parametrize("kw", [dict(N=1), dict(lam=0.0), dict(rho=-1.0), dict(M=8)])
    def test_rejects_bad_input(self, kw):
        args = dict(N=3, lam=1.0, rho=10.0, i=1, model=TWO_HUMP, M=64) | kw
        with pytest.raises(DomainError):
            VariationalProblem(**args)


class TestEvalJ:
    def test_zero_profile(self, small):
        assert eval_J(small, small.profile(np.zeros(65))) == 0.0

    def test_plateau_negative(self):
        for i in (1, 2):
            vp = VariationalProblem.default(3, 1.0, TWO_HUMP, i)
            assert eval_J(vp, plateau_profile(TWO_HUMP.gammas[i - 1], vp)) < 0

    def test_cone_violation_names_cell(self, small):
        v = np.zeros(65)
        v[10] = 1.0
        with pytest.raises(ConeViolation) as info:
            eval_J(small, small.profile(v))
        assert info.value.cell == 9

    def test_boundary_violation(self, small):
        v = np.zeros(65)
        v[-1] = 0.01
        with pytest.raises(ConeViolation):
            eval_J(small, small.profile(v))

    def test_wrong_size(self, small):
        with pytest.raises(DomainError):
            eval_J(small, small.profile(np.zeros(10)))

    def test_unit_slope_is_finite(self, small):
        v = small.rho - small.nodes
        assert math.isfinite(eval_J(small, small.profile(v)))

    def test_refinement_first_order(self):
        # fixed analytic profile on refined meshes; differences shrink at least linearly
        vals = []
        for M in (64, 128, 256, 512):
            vp = VariationalProblem(3, 1.0, 20.0, 1, TWO_HUMP, M)
            v = 2.5 * np.cos(np.pi * vp.nodes / 40.0)
            v[-1] = 0.0
            vals.append(eval_J(vp, vp.profile(v)))
        d = np.abs(np.diff(vals))
        assert np.all(d[1:] <= 0.6 * d[:-1])

    def test_truncation_consistency(self, rng):
        vp = VariationalProblem(3, 1.0, 40.0, 2, TWO_HUMP, 256)
        for _ in range(5):
            v = random_cone(vp, rng, 0.9)
            v = vp.profile(np.clip(v.values, 0.0, 17.5))
            if v.cone_violation() is not None:
                continue
            J_trunc = eval_J(vp, v)
            untruncated = _raw_J(vp, v)
            assert abs(J_trunc - untruncated) <= 1e-12 * max(1.0, abs(untruncated))

    def test_clamping_at_beta_never_raises_J(self, rng):
        vp = VariationalProblem(3, 1.0, 30.0, 1, TWO_HUMP, 256)
        for _ in range(10):
            v = random_cone(vp, rng, 0.5)
            clamped = vp.profile(np.minimum(v.values, vp.trunc_model.cap))
            assert eval_J(vp, clamped) <= eval_J(vp, v)


def _raw_J(vp, v):
    # same quadrature, untruncated model
    s = np.diff(v.values) / vp.h
    slope = np.sum(vp.weights * vp.h * (1 - np.sqrt(1 - s * s)))
    Fv = eval_F(vp.model, v.values)
    pot = np.sum(vp.weights * vp.h * 0.5 * (Fv[:-1] + Fv[1:]))
    return slope - vp.lam * pot


class TestGradient:
    def test_matches_finite_differences(self, small, rng):
        for _ in range(20):
            v = random_cone(small, rng)
            g = grad_J(small, v)
            fd = np.empty_like(g)
            for j in range(g.size):
                step = 1e-6 * max(1.0, abs(v.values[j]))
                up, dn = v.values.copy(), v.values.copy()
                up[j] += step
                dn[j] -= step
                fd[j] = (eval_J(small, small.profile(up)) - eval_J(small, small.profile(dn))) / (2 * step)
            assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(g)

    @settings(max_examples=20)
    @given(st.integers(0, 2**32 - 1))
    def test_gradient_directional(self, seed):
        rng = np.random.default_rng(seed)
        vp = VariationalProblem(3, 0.5, 10.0, 2, TWO_HUMP, 32)
        v = random_cone(vp, rng, 0.5)
        d = rng.normal(size=vp.M)
        d /= np.linalg.norm(d)
        eps = 1e-6 * vp.h
        up, dn = v.values.copy(), v.values.copy()
        up[:-1] += eps * d
        dn[:-1] -= eps * d
        fd = (eval_J(vp, vp.profile(up)) - eval_J(vp, vp.profile(dn))) / (2 * eps)
        an = grad_J(vp, v) @ d
        assert abs(fd - an) <= 1e-5 * (np.linalg.norm(grad_J(vp, v)) + 1e-8)


class TestProfiles:
    def test_plateau_shape(self):
        vp = VariationalProblem.default(3, 1.0, TWO_HUMP, 1)
        g = TWO_HUMP.gammas[0]
        v = plateau_profile(g, vp)
        assert v.values[0] == g and v.values[-1] == 0.0
        ramp = vp.nodes > vp.rho - 2 * g + vp.h
        np.testing.assert_allclose(np.abs(v.slopes()[ramp[:-1]]), 0.5, rtol=1e-9)
        assert v.cone_violation() is None

    def test_plateau_at_beta2(self):
        vp = VariationalProblem.default(3, 1.0, TWO_HUMP, 2)
        v = plateau_profile(18.0, vp)
        flat = vp.nodes <= vp.rho - 36.0
        assert np.all(v.values[flat] == 18.0)

    def test_plateau_needs_room(self, small):
        with pytest.raises(DomainError):
            plateau_profile(6.0, small)

    def test_steep_ramp(self, small):
        v = steep_profile(5.0, small, 0.9)
        assert v.values[0] == 5.0 and v.cone_violation() is None
        with pytest.raises(DomainError):
            steep_profile(5.0, small, 1.0)

    def test_projection(self, small, rng):
        wild = rng.normal(scale=5.0, size=65)
        p = small.profile(project_cone(wild, small.h))
        assert p.cone_violation() is None
        inside = random_cone(small, rng).values
        np.testing.assert_array_equal(project_cone(inside, small.h), inside)


class TestMinimize:
    def test_zero_is_stationary_for_tiny_lambda(self):
        vp = VariationalProblem(3, 1e-6, 144.0, 1, TWO_HUMP, 256)
        res = minimize_J(vp, vp.profile(np.zeros(257)))
        assert res.converged
        assert np.max(np.abs(res.profile.values)) < 1e-8
        assert res.J == 0.0

    def test_negative_from_plateau(self, hump_results):
        for i, (vp, results) in hump_results.items():
            for res in results:
                assert res.J < 0
                assert res.J <= res.J_init
                assert res.converged

    def test_descent_history(self, hump_results):
        for _, results in hump_results.values():
            for res in results:
                assert np.all(np.diff(res.history) <= 0)

    def test_cone_preserved(self, hump_results):
        for vp, results in hump_results.values():
            for res in results:
                assert res.profile.values[-1] == 0.0
                assert np.all(np.abs(np.diff(res.profile.values)) <= vp.h)

    def test_minimizers_stay_below_beta(self, hump_results):
        for vp, results in hump_results.values():
            for res in results:
                assert np.max(res.profile.values) <= vp.trunc_model.cap
                assert np.min(res.profile.values) >= -1e-9

    def test_iteration_cap_flags_not_converged(self):
        vp = VariationalProblem.default(3, 1.0, TWO_HUMP, 2)
        res = minimize_J(vp, plateau_profile(TWO_HUMP.gammas[1], vp), VariationalConfig(max_iters=2))
        assert not res.converged and res.iterations == 2

    def test_mesh_convergence(self):
        centers = []
        for M in (256, 512):
            vp = VariationalProblem(3, 1.0, 144.0, 1, TWO_HUMP, M)
            centers.append(multistart(vp)[0].center)
        assert abs(centers[1] - centers[0]) < 0.01 * abs(centers[0])

    def test_default_inits(self):
        vp = VariationalProblem.default(3, 1.0, TWO_HUMP, 1)
        labels = [lab for lab, _ in default_inits(vp)]
        assert labels == ["plateau_gamma", "plateau_beta", "steep_beta"]
        extra = default_inits(vp, seed=3, n_random=2)
        assert [lab for lab, _ in extra][-2:] == ["random_0", "random_1"]

    def test_multistart_sorted(self, hump_results):
        for _, results in hump_results.values():
            Js = [res.J for res in results]
            assert Js == sorted(Js)


class TestEscapeAndCenter:
    def test_second_hump_escapes(self, hump_results):
        vp, results = hump_results[2]
        assert check_escape(vp, results[0].profile)

    def test_zero_does_not_escape(self):
        vp = VariationalProblem.default(3, 1.0, TWO_HUMP, 2)
        assert not check_escape(vp, vp.profile(np.zeros(vp.M + 1)))

    def test_escape_needs_previous_hump(self):
        vp = VariationalProblem.default(3, 1.0, TWO_HUMP, 1)
        with pytest.raises(DomainError):
            check_escape(vp, vp.profile(np.zeros(vp.M + 1)))

    def test_tiny_lambda_stays_low(self):
        vp = VariationalProblem(3, 1e-6, 144.0, 2, TWO_HUMP, 256)
        res = minimize_J(vp, vp.profile(np.zeros(257)))
        assert not check_escape(vp, res.profile)

    def test_zero_center_rejected(self):
        vp = VariationalProblem.default(3, 1.0, TWO_HUMP, 1)
        ch = center_height(vp.profile(np.zeros(vp.M + 1)), vp)
        assert ch.value == 0.0 and ch.rejected

    def test_center_of_decreasing_profile_is_max(self, hump_results):
        vp, results = hump_results[1]
        v = results[0].profile.values
        assert center_height(results[0].profile).value == np.max(v)

    def test_inside_hump_accepted(self):
        vp = VariationalProblem.default(3, 1.0, TWO_HUMP, 2)
        ch = center_height(plateau_profile(12.0, vp), vp)
        assert not ch.rejected and float(ch) == 12.0

    def test_centers_sit_at_the_top_of_the_hump(self, hump_results):
        # the plateau sits within roundoff of beta_i; report its shooting class
        for i, (vp, results) in hump_results.items():
            c = results[0].center
            assert abs(c - TWO_HUMP.betas[i - 1]) < 1e-9 * TWO_HUMP.betas[i - 1]
            verdict = classify(ShootingProblem(3, 1.0, TWO_HUMP), c).verdict
            assert verdict in (Verdict.MINUS, Verdict.EQUILIBRIUM)
