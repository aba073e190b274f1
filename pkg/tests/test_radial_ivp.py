import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mgs.config import Tolerances
from mgs.errors import AssumptionViolation, DomainError
from mgs.nonlinearity import NonlinearityModel, eval_F, eval_f
from mgs.radial_ivp import (ShootingProblem, Terminal, default_r_max, energy_budget,
                            energy_residual, integrate, integrate_from, phi_prime,
                            phi_prime_inv, taylor_start)


class TestFlux:
    def test_zero(self):
        assert phi_prime(0.0) == 0.0
        assert phi_prime_inv(0.0) == 0.0

    def test_three_four_five(self):
        assert phi_prime(0.6) == pytest.approx(0.75, rel=1e-15)
        assert phi_prime(-0.6) == pytest.approx(-0.75, rel=1e-15)
        assert phi_prime_inv(0.75) == pytest.approx(0.6, rel=1e-15)

    @pytest.mark.parametrize("p", [1.0, -1.0, 1.5, math.nan])
    def test_outside_unit_interval(self, p):
        with pytest.raises(DomainError):
            phi_prime(p)

    def test_inverse_rejects_non_finite(self):
        with pytest.raises(DomainError):
            phi_prime_inv(math.inf)

    def test_round_trip(self, rng):
        p = rng.uniform(-0.999, 0.999, 1000)
        np.testing.assert_allclose(phi_prime_inv(phi_prime(p)), p, rtol=0, atol=1e-14)

    @given(st.floats(-0.999999, 0.999999), st.floats(-0.999999, 0.999999))
    def test_strictly_increasing_and_odd(self, a, b):
        if a < b:
            assert phi_prime(a) < phi_prime(b)
        assert phi_prime(-a) == -phi_prime(a)

    @given(st.floats(-1e12, 1e12))
    def test_inverse_inside_cone(self, q):
        assert abs(phi_prime_inv(q)) <= 1.0
        if abs(q) < 1e7:
            assert abs(phi_prime_inv(q)) < 1.0


class TestProblem:
    def test_rejects_small_dimension(self, two_hump):
        with pytest.raises(DomainError):
            ShootingProblem(1, 1.0, two_hump)

    def test_rejects_nonpositive_lambda(self, two_hump):
        with pytest.raises(DomainError):
            ShootingProblem(3, 0.0, two_hump)

    def test_rejects_failing_model(self):
        flat = NonlinearityModel.factored([0.0, 1.0, 1.0, 1.0])
        with pytest.raises(AssumptionViolation, match="A5"):
            ShootingProblem(3, 1.0, flat)
        ShootingProblem(2, 1.0, flat)

    def test_default_rmax(self, two_hump, cubic):
        assert default_r_max(ShootingProblem(3, 1.0, two_hump)) == pytest.approx(1.8e5, rel=1e-12)
        assert default_r_max(ShootingProblem(3, 0.25, two_hump)) == pytest.approx(3.6e5, rel=1e-12)
        assert default_r_max(ShootingProblem(3, 1.0, cubic)) == pytest.approx(1e4, rel=1e-12)


class TestTaylorStart:
    def test_initial_slope(self, problem):
        r0 = 1e-6
        st0 = taylor_start(problem, 2.0, r0)
        assert st0.uprime == pytest.approx(-224.0 * r0 / 3.0, rel=1e-9)
        assert st0.u == pytest.approx(2.0 - 224.0 * r0**2 / 6.0, rel=1e-15)

    def test_equilibrium_marker(self, problem):
        assert taylor_start(problem, 1.0) is None
        traj = integrate(problem, 1.0)
        assert traj.terminal.kind is Terminal.EQUILIBRIUM
        assert energy_residual(problem, traj) == 0.0

    @given(st.floats(0.01, 20.0))
    def test_height_drops_where_f_positive(self, zeta):
        model = NonlinearityModel.polynomial([0, -486, 729, -273, 31, -1])
        prob = ShootingProblem(3, 1.0, model, check=False)
        st0 = taylor_start(prob, zeta)
        if eval_f(model, zeta) > 0:
            assert st0.u < zeta and st0.q < 0

    def _start_defect(self, problem, zeta, r0):
        st0 = taylor_start(problem, zeta, r0)
        H = math.sqrt(1 + st0.q**2) - 1
        drop = eval_F(problem.model, zeta) - eval_F(problem.model, st0.u)
        return abs(H + 2 * st0.E - drop)

    def test_start_respects_energy_identity(self, problem):
        for zeta in (1.5, 2.5, 12.0, 16.0):
            scale = 1 + abs(eval_F(problem.model, zeta))
            assert self._start_defect(problem, zeta, 1e-6) < 1e-11 * scale

    def test_start_defect_is_fourth_order(self, problem):
        ratio = self._start_defect(problem, 1.5, 1e-3) / self._start_defect(problem, 1.5, 1e-4)
        assert 5e3 < ratio < 2e4

    def test_nonpositive_height(self, problem):
        with pytest.raises(DomainError):
            taylor_start(problem, 0.0)


class TestIntegrate:
    @pytest.mark.parametrize("lam", [0.1, 1.0, 50.0])
    def test_lower_half_of_hump_turns(self, two_hump, lam):
        prob = ShootingProblem(3, lam, two_hump)
        a, xi = two_hump.alphas[0], two_hump.xis[0]
        for zeta in np.linspace(a, xi, 7)[1:]:
            traj = integrate(prob, zeta)
            assert traj.terminal.kind is Terminal.SLOPE_VANISHED
            assert traj.final.u > 0

    def test_monotone_before_terminal(self, problem):
        for zeta in (1.5, 2.9, 2.9999, 12.0, 16.5):
            traj = integrate(problem, zeta)
            assert np.all(np.diff(traj.r) > 0)
            assert np.all(np.diff(traj.u) <= 0)
            assert np.all(traj.q[:-1] < 0)
            assert np.all(np.abs(traj.uprime) < 1.0)
            assert np.all(traj.u[:-1] > 0)

    def test_height_vanishes_above_boundary(self, problem):
        traj = integrate(problem, 17.0)
        assert traj.terminal.kind is Terminal.HEIGHT_VANISHED
        assert abs(traj.final.u) < 1e-9
        assert traj.final.uprime < 0

    def test_reaches_rmax(self, problem):
        traj = integrate(problem, 2.0, r_max=0.5)
        assert traj.terminal.kind is Terminal.REACHED_RMAX
        assert traj.r[-1] == 0.5

    def test_rejects_nonpositive_height(self, problem):
        with pytest.raises(DomainError):
            integrate(problem, -1.0)

    def test_step_budget_exhaustion(self, problem):
        traj = integrate(problem, 2.0, tol=Tolerances(max_steps=5))
        assert traj.terminal.kind is Terminal.STEP_FAILURE
        assert traj.terminal.detail["reason"] == "max_steps"

    def test_dimension_two(self, two_hump):
        prob = ShootingProblem(2, 1.0, two_hump)
        traj = integrate(prob, 1.5)
        assert traj.terminal.kind is Terminal.SLOPE_VANISHED
        assert energy_residual(prob, traj) <= 1e-7 * energy_budget(prob)

    def test_event_radius_localized(self, problem):
        traj = integrate(problem, 2.0)
        # one more tiny step in either direction flips the slope sign
        assert traj.final.q >= 0
        assert traj.q[-2] < 0
        assert traj.terminal.radius == traj.r[-1]


class TestEnergy:
    @given(st.floats(1.001, 17.99))
    def test_residual_within_budget(self, zeta):
        model = NonlinearityModel.polynomial([0, -486, 729, -273, 31, -1])
        prob = ShootingProblem(3, 1.0, model, check=False)
        traj = integrate(prob, zeta)
        assert energy_residual(prob, traj) <= 1e-7 * energy_budget(prob)

    def test_residual_shrinks_with_tolerance(self, problem):
        for zeta in (2.0, 16.0):
            res = [energy_residual(problem, integrate(problem, zeta, tol=Tolerances(rel=rt, abs=rt * 1e-2)))
                   for rt in (1e-6, 1e-8, 1e-10)]
            assert res[0] > res[1] > res[2]

    def test_coordinate_identity(self, problem):
        traj = integrate(problem, 2.5)
        p = traj.uprime
        classic = (1 - np.sqrt(1 - p * p)) / np.sqrt(1 - p * p)
        np.testing.assert_allclose(traj.H, classic, rtol=1e-9, atol=1e-12)

    def test_dissipation_nondecreasing(self, problem):
        for zeta in (1.5, 2.99, 16.0):
            traj = integrate(problem, zeta)
            assert np.all(traj.E >= 0)
            assert np.all(np.diff(traj.E) >= 0)

    def test_equation_residual_converges(self, problem):
        def worst(rt):
            traj = integrate(problem, 2.0, tol=Tolerances(rel=rt, abs=rt * 1e-2))
            r, u, q = traj.r, traj.u, traj.q
            dq = np.diff(q) / np.diff(r)
            rm = 0.5 * (r[1:] + r[:-1])
            um = 0.5 * (u[1:] + u[:-1])
            qm = 0.5 * (q[1:] + q[:-1])
            rhs = -2 * qm / rm - eval_f(problem.model, um)
            return np.median(np.abs(dq - rhs) / (1 + np.abs(rhs)))
        assert worst(1e-10) < worst(1e-6)

    def test_taylor_start_halving(self, problem):
        a = integrate(problem, 2.0, tol=Tolerances(r0=1e-6))
        b = integrate(problem, 2.0, tol=Tolerances(r0=5e-7))
        assert abs(a.final.u - b.final.u) < 1e-10 * abs(a.final.u)


class TestRestartAndSerialization:
    def test_restart_reproduces_tail(self, problem):
        traj = integrate(problem, 2.5)
        mid = len(traj) // 2
        tail = integrate_from(problem, traj[mid], traj.r[-1] * 2, zeta=traj.zeta)
        assert tail.terminal.kind is Terminal.SLOPE_VANISHED
        assert tail.final.u == pytest.approx(traj.final.u, rel=1e-8)

    def test_csv_columns(self, problem):
        traj = integrate(problem, 2.0)
        text = traj.to_csv()
        lines = text.strip().splitlines()
        assert lines[0] == "r,u,uprime,q,E"
        assert len(lines) == len(traj) + 1
        first = [float(x) for x in lines[1].split(",")]
        assert first[0] == traj.r[0] and first[1] == traj.u[0]

    def test_json_metadata(self, problem):
        traj = integrate(problem, 2.0)
        meta = json.loads(traj.to_json())
        assert meta["terminal"] == "SlopeVanished"
        assert meta["radius"] == traj.terminal.radius
        assert 0 < meta["min_gradient_gap"] <= 1
