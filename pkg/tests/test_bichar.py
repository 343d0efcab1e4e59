"""
Tests for the bicharacteristic integrator.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from src.artifacts import read_csv
from src.bichar import (
    PhasePoint,
    Trajectory,
    conserve_check,
    finite_difference_gradient,
    flow,
    flow_fan,
)
from src.errors import FlowAborted, GuardError, ValidationError
from src.symbol import Symbol, builtin

FREE = builtin("free")
HARMONIC = builtin("harmonic")


class TestPhasePoint:
    """Tests for PhasePoint validation."""

    def test_coerces_scalars(self):
        p = PhasePoint(1, 2.5)

        assert p.x == (1.0,)
        assert p.xi == (2.5,)
        assert p.dim == 1

    @pytest.mark.parametrize("x, xi", [((0.0,), (1.0, 2.0)), ((0.0,) * 3, (0.0,) * 3), ((math.nan,), (0.0,))])
    def test_rejects_invalid(self, x, xi):
        with pytest.raises(ValidationError):
            PhasePoint(x, xi)


class TestFlow:
    """Tests for flow on closed-form Hamiltonians."""

    def test_free_transport(self):
        traj = flow(FREE, ((0.0,), (1.0,)), 2.0)

        assert traj.status == "completed"
        assert traj.times[-1] == 2.0
        assert traj.final().x[0] == pytest.approx(2.0, abs=1e-12)
        assert traj.final().xi[0] == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.diff(traj.times) > 0)
        assert len(traj.step_sizes) == len(traj) - 1

    def test_harmonic_period(self):
        traj = flow(HARMONIC, ((1.0,), (0.0,)), 2 * math.pi, tol=1e-10)
        end = traj.final()

        assert end.x[0] == pytest.approx(1.0, abs=1e-6)
        assert end.xi[0] == pytest.approx(0.0, abs=1e-6)

    def test_harmonic_two_dimensional(self):
        traj = flow(HARMONIC, ((1.0, 0.0), (0.0, 2.0)), math.pi / 2, tol=1e-10)
        end = traj.final()

        np.testing.assert_allclose(end.x, [0.0, 2.0], atol=1e-7)
        np.testing.assert_allclose(end.xi, [-1.0, 0.0], atol=1e-7)

    def test_energy_conservation(self):
        traj = flow(HARMONIC, ((0.3,), (1.2,)), 10.0, tol=1e-10)

        assert conserve_check(HARMONIC, traj) <= 1e-8

    def test_time_reversal(self):
        forward = flow(HARMONIC, ((0.5,), (1.0,)), 3.0, tol=1e-9)
        back = flow(HARMONIC, forward.final(), -3.0, tol=1e-9)

        assert back.final().x[0] == pytest.approx(0.5, abs=1e-8)
        assert back.final().xi[0] == pytest.approx(1.0, abs=1e-8)

    def test_backward_flow(self):
        traj = flow(HARMONIC, ((1.0,), (0.0,)), -math.pi / 2, tol=1e-10)

        assert np.all(np.diff(traj.times) < 0)
        assert traj.times[-1] == -math.pi / 2
        assert traj.final().x[0] == pytest.approx(0.0, abs=1e-7)
        assert traj.final().xi[0] == pytest.approx(1.0, abs=1e-7)

    def test_constant_damping_amplitude(self):
        traj = flow(builtin("damped_free", {"gamma": 0.5}), ((0.0,), (1.0,)), 3.0)

        assert traj.log_amplitude[-1] == pytest.approx(-3.0, abs=1e-10)
        np.testing.assert_allclose(traj.log_amplitude, -traj.times, atol=1e-10)

    def test_variable_damping_amplitude(self):
        gamma = 0.5
        p0 = builtin("damped_free", {"gamma": gamma, "profile": "tanh"})
        traj = flow(p0, ((-1.0,), (1.0,)), 3.0, tol=1e-10)
        expected, _ = quad(lambda t: -2 * gamma * (1 + math.tanh(-1.0 + t)), 0.0, 3.0, epsabs=1e-13)

        assert traj.log_amplitude[-1] == pytest.approx(expected, abs=1e-7)
        assert np.all(np.diff(traj.log_amplitude) <= 0)

    def test_initial_log_amplitude(self):
        traj = flow(builtin("damped_free", {"gamma": 0.25}), ((0.0,), (1.0,)), 2.0, log_amplitude0=1.5)

        assert traj.log_amplitude[0] == 1.5
        assert traj.log_amplitude[-1] == pytest.approx(0.5, abs=1e-10)

    def test_finite_difference_fallback(self):
        opaque = Symbol(lambda x, xi: (x[0] ** 2 + xi[0] ** 2) / 2.0 + 0j, 2.0, name="opaque")
        analytic = flow(HARMONIC, ((1.0,), (0.0,)), 1.0, tol=1e-10)
        numeric = flow(opaque, ((1.0,), (0.0,)), 1.0, tol=1e-10)

        assert numeric.final().x[0] == pytest.approx(analytic.final().x[0], abs=1e-6)
        assert numeric.final().xi[0] == pytest.approx(analytic.final().xi[0], abs=1e-6)

    def test_blow_up_aborts_with_partial_path(self):
        hyperbolic = Symbol(lambda x, xi: x[0] * xi[0] + 0j, 2.0, name="hyperbolic")

        with pytest.raises(FlowAborted) as info:
            flow(hyperbolic, ((1.0,), (0.0,)), 20.0)

        assert isinstance(info.value, GuardError)
        assert info.value.reason == "blow_up"
        partial = info.value.trajectory
        assert partial.status == "blow_up"
        assert abs(partial.xs[-1, 0]) > 1e6
        assert partial.times[-1] == pytest.approx(math.log(1e6), abs=0.5)

    @pytest.mark.parametrize("tol", [1e-3, 1e-13])
    def test_rejects_tolerance(self, tol):
        with pytest.raises(ValidationError):
            flow(FREE, ((0.0,), (1.0,)), 1.0, tol=tol)

    def test_rejects_zero_time(self):
        with pytest.raises(ValidationError):
            flow(FREE, ((0.0,), (1.0,)), 0.0)


class TestEvaluationTimes:
    """Tests for landing on t_eval."""

    def test_lands_exactly(self):
        traj = flow(FREE, ((0.0,), (1.0,)), 2.0, t_eval=[0.5, 1.0, 1.5, 2.0])

        assert traj.times.tolist() == [0.0, 0.5, 1.0, 1.5, 2.0]
        np.testing.assert_allclose(traj.xs[:, 0], traj.times, atol=1e-12)

    def test_appends_end_time(self):
        traj = flow(HARMONIC, ((1.0,), (0.0,)), 1.0, t_eval=[0.25, 0.5])

        assert traj.times.tolist() == [0.0, 0.25, 0.5, 1.0]
        np.testing.assert_allclose(traj.xs[:, 0], np.cos(traj.times), atol=1e-7)

    def test_sample_interpolates(self):
        traj = flow(FREE, ((0.0,), (2.0,)), 1.0, t_eval=[0.5, 1.0])
        xs, xis, _ = traj.sample([0.25, 0.75])

        np.testing.assert_allclose(xs[:, 0], [0.5, 1.5], atol=1e-12)
        np.testing.assert_allclose(xis[:, 0], 2.0)

    @pytest.mark.parametrize("t_eval", [[0.5, 3.0], [1.0, 0.5], [-0.5, 1.0]])
    def test_rejects_bad_times(self, t_eval):
        with pytest.raises(ValidationError):
            flow(FREE, ((0.0,), (1.0,)), 2.0, t_eval=t_eval)


class TestFiniteDifferenceGradient:
    """Tests for finite_difference_gradient."""

    @pytest.mark.parametrize("p0", [HARMONIC, builtin("damped_free", {"gamma": 0.5, "profile": "tanh"}),
                                    builtin("potential", {"profile": "gaussian", "width": 0.7})])
    def test_matches_analytic(self, p0):
        x, xi = np.array([0.4, -0.3]), np.array([1.1, 0.2])
        dx, dxi = finite_difference_gradient(p0, x, xi)
        exact_dx, exact_dxi = p0.gradient(x[:, None], xi[:, None])

        np.testing.assert_allclose(dx, np.real(np.broadcast_to(exact_dx, (2, 1)))[:, 0], atol=1e-5)
        np.testing.assert_allclose(dxi, np.real(np.broadcast_to(exact_dxi, (2, 1)))[:, 0], atol=1e-5)


class TestFlowFan:
    """Tests for flow_fan."""

    def test_order_and_workers(self):
        starts = [((0.0,), (1.0,)), ((0.0,), (2.0,)), ((0.0,), (-1.0,)), ((1.0,), (0.5,))]
        serial = flow_fan(FREE, starts, 1.0)
        threaded = flow_fan(FREE, starts, 1.0, workers=4)

        assert [t.final().x[0] for t in serial] == pytest.approx([1.0, 2.0, -1.0, 1.5], abs=1e-12)
        for a, b in zip(serial, threaded):
            np.testing.assert_array_equal(a.xs, b.xs)
            np.testing.assert_array_equal(a.times, b.times)


class TestTrajectoryCsv:
    """Tests for Trajectory serialization."""

    def test_layout(self, tmp_path):
        traj = flow(FREE, ((0.0, 1.0), (1.0, 0.0)), 1.0, t_eval=[0.5, 1.0])
        path = traj.to_csv(tmp_path / "trajectory_0.csv", digest="abc")

        rows = read_csv(path)
        assert rows[0] == ["t", "x_0", "x_1", "xi_0", "xi_1", "log_amp"]
        assert len(rows) == 4
        assert "# status=completed" in path.read_text()

    def test_points(self):
        traj = Trajectory(np.array([0.0, 1.0]), np.array([[0.0], [1.0]]), np.array([[1.0], [1.0]]),
                          np.zeros(2))

        assert traj.points == [PhasePoint(0.0, 1.0), PhasePoint(1.0, 1.0)]
