"""
Tests for the Gabor density, wavefront estimates, split-step evolution and
the propagation check.
"""

import json
import math

import numpy as np
import pytest

from src.energy import coherent_state
from src.errors import GuardError, ValidationError
from src.grid import Field, Grid
from src.symbol import Symbol, builtin
from src.wavefront import (
    estimate_wavefront,
    evolve,
    gabor_transform,
    propagation_check,
)

FREE_G = lambda xi: np.sum(np.asarray(xi) ** 2, axis=0) / 2.0
HARMONIC_F = lambda x: np.sum(np.asarray(x) ** 2, axis=0) / 2.0


@pytest.fixture
def grid():
    return Grid(1, 256, 8.0)


class TestGaborTransform:
    """Tests for gabor_transform and PhaseSpaceDensity."""

    def test_coherent_state_peak(self, grid):
        h = 0.1
        density = gabor_transform(coherent_state(grid, [1.0], [2.0], h), h)
        (x,), (xi,) = density.argmax()

        assert abs(x - 1.0) <= grid.spacing
        assert abs(xi - 2.0) <= grid.dual_spacing(h)

    def test_even_gaussian_has_zero_frequency_centroid(self, grid):
        u = Field.from_function(grid, lambda x: np.exp(-x[0] ** 2 / 2.0))
        _, xi_centroid = gabor_transform(u, 0.1).centroid()

        assert abs(xi_centroid[0]) <= 1e-10

    @pytest.mark.parametrize("h", [0.4, 0.2, 0.1, 0.05])
    def test_centroid_converges_over_h_sweep(self, grid, h):
        x_centroid, xi_centroid = gabor_transform(coherent_state(grid, [1.0], [1.0], h), h).centroid()

        assert abs(x_centroid[0] - 1.0) <= 0.1 * math.sqrt(h)
        assert abs(xi_centroid[0] - 1.0) <= 0.1 * math.sqrt(h)

    def test_centroid_is_periodic_in_x(self, grid):
        h = 0.1
        u = coherent_state(grid, [0.0], [1.0], h)
        half_box = grid.points_per_axis // 2
        before_x, before_xi = gabor_transform(u, h, x_stride=2).centroid()
        after_x, after_xi = gabor_transform(Field(grid, np.roll(u.values, half_box)), h, x_stride=2).centroid()
        wrapped = (after_x[0] - before_x[0]) % (2 * grid.half_length) - grid.half_length

        assert abs(abs(after_x[0]) - grid.half_length) <= 1e-6
        assert abs(wrapped) <= 1e-9
        assert after_xi[0] == pytest.approx(before_xi[0], abs=1e-10)

    def test_normalized_mass_matches_norm(self, grid):
        h = 0.1
        u = coherent_state(grid, [-2.0], [1.0], h)
        density = gabor_transform(u, h)

        assert density.normalized_mass() == pytest.approx(u.norm_squared(), rel=0.02)

    def test_translation_covariance(self, grid):
        h = 0.1
        u = coherent_state(grid, [0.0], [1.0], h)
        shift = 16
        moved = Field(grid, np.roll(u.values, shift))
        before = gabor_transform(u, h).x_marginal()
        after = gabor_transform(moved, h).x_marginal()

        np.testing.assert_allclose(after, np.roll(before, shift), rtol=1e-10, atol=1e-12 * before.max())

    def test_x_stride_and_window(self, grid):
        h = 0.1
        density = gabor_transform(coherent_state(grid, [0.0], [1.0], h), h, xi_window=(0.0, 2.0), x_stride=4)

        assert density.values.shape == (64, density.xi_axes[0].size)
        assert density.xi_axes[0].min() >= 0.0
        assert density.xi_axes[0].max() <= 2.0

    def test_workers_do_not_change_values(self, grid):
        u = coherent_state(grid, [0.5], [-1.0], 0.1)

        np.testing.assert_array_equal(gabor_transform(u, 0.1, x_stride=8).values,
                                      gabor_transform(u, 0.1, x_stride=8, workers=4).values)

    def test_rejects_narrow_window(self, grid):
        with pytest.raises(ValidationError, match="narrower"):
            gabor_transform(Field.zeros(grid), 0.1, sigma=grid.spacing)

    def test_rejects_window_beyond_nyquist(self, grid):
        with pytest.raises(ValidationError, match="Nyquist"):
            gabor_transform(Field.zeros(grid), 0.1, xi_window=(0.0, 100.0))

    def test_csv_layout(self, tmp_path):
        small = Grid(1, 32, 2.0)
        density = gabor_transform(Field.from_function(small, lambda x: np.exp(-x[0] ** 2)), 0.5, x_stride=4)
        path = density.to_csv(tmp_path / "density.csv")

        assert path.read_text().splitlines()[2] == "# h=0.5"
        assert path.read_text().count("\n") == 5 + 8 * 32


class TestEstimateWavefront:
    """Tests for estimate_wavefront."""

    def test_zero_density(self, grid):
        estimate = estimate_wavefront(gabor_transform(Field.zeros(grid), 0.1, x_stride=8))

        assert len(estimate) == 0
        assert estimate.clusters() == []

    def test_single_cluster(self, grid):
        h = 0.1
        estimate = estimate_wavefront(gabor_transform(coherent_state(grid, [1.0], [2.0], h), h, x_stride=2))

        assert len(estimate.clusters()) == 1
        (x, xi) = estimate.points[0]
        assert abs(x[0] - 1.0) <= 2 * grid.spacing
        assert estimate.densities == sorted(estimate.densities, reverse=True)

    def test_two_clusters(self, grid):
        h = 0.1
        left = coherent_state(grid, [-4.0], [2.0], h)
        right = coherent_state(grid, [4.0], [-2.0], h)
        estimate = estimate_wavefront(gabor_transform(Field(grid, left.values + right.values), h, x_stride=2))
        clusters = estimate.clusters()

        assert len(clusters) == 2
        centers = sorted(np.mean([estimate.points[i][0][0] for i in c]) for c in clusters)
        assert centers == [pytest.approx(-4.0, abs=0.1), pytest.approx(4.0, abs=0.1)]

    def test_threshold_is_monotone(self, grid):
        h = 0.1
        density = gabor_transform(coherent_state(grid, [0.0], [1.0], h), h, x_stride=4)
        loose, tight = estimate_wavefront(density, 0.05), estimate_wavefront(density, 0.5)

        assert set(tight.indices) <= set(loose.indices)
        assert len(tight) < len(loose)

    @pytest.mark.parametrize("delta", [0.0, 1.0, -0.2])
    def test_rejects_threshold(self, grid, delta):
        density = gabor_transform(Field.zeros(grid), 0.1, x_stride=8)

        with pytest.raises(ValidationError):
            estimate_wavefront(density, delta)


class TestEvolve:
    """Tests for split-step evolution."""

    def test_free_mass_conserved(self, grid):
        h = 0.1
        run = evolve(FREE_G, None, coherent_state(grid, [0.0], [1.0], h), h, 1.0, 0.01)

        np.testing.assert_allclose(run.masses(), 1.0, atol=1e-10)
        assert run.times[-1] == 1.0
        assert len(run.snapshots) == 101

    def test_constant_damping_rate(self, grid):
        h, gamma = 0.1, 0.5
        run = evolve(FREE_G, lambda x: -1j * gamma * np.ones(np.shape(x)[1:]),
                     coherent_state(grid, [0.0], [1.0], h), h, 1.0, 0.01)
        slope = np.polyfit(run.times, np.log(run.masses()), 1)[0]

        assert slope == pytest.approx(-2 * gamma / h, rel=0.01)

    def test_dissipative_mass_nonincreasing(self, grid):
        h = 0.1
        damping = builtin("damped_free", {"gamma": 0.3, "profile": "tanh"})
        g, f = damping.additive_parts()
        masses = evolve(g, f, coherent_state(grid, [-1.0], [1.0], h), h, 2.0, 0.02).masses()

        assert np.all(np.diff(masses) <= 1e-14 * masses[0])

    def test_second_order_in_dt(self, grid):
        h = 0.1
        u0 = coherent_state(grid, [1.0], [0.5], h)
        reference = evolve(FREE_G, HARMONIC_F, u0, h, 1.0, 0.01 / 16).final().values
        errors = [np.linalg.norm(evolve(FREE_G, HARMONIC_F, u0, h, 1.0, dt).final().values - reference)
                  for dt in (0.01, 0.005)]

        assert 3.0 <= errors[0] / errors[1] <= 5.0

    def test_record_every(self, grid):
        h = 0.1
        run = evolve(FREE_G, None, coherent_state(grid, [0.0], [0.0], h), h, 1.0, 0.01, record_every=30)

        assert run.times.tolist() == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])

    def test_rejects_amplifying_potential(self, grid):
        u0 = coherent_state(grid, [0.0], [0.0], 0.1)

        with pytest.raises(ValidationError, match="not dissipative"):
            evolve(FREE_G, lambda x: 0.1j * np.ones(np.shape(x)[1:]), u0, 0.1, 1.0, 0.01)

    def test_rejects_coarse_step(self, grid):
        with pytest.raises(ValidationError, match="0.01"):
            evolve(FREE_G, None, coherent_state(grid, [0.0], [0.0], 0.1), 0.1, 1.0, 0.05)

    def test_spectral_guard(self, grid):
        noise = np.random.default_rng(0).standard_normal(grid.shape)

        with pytest.raises(GuardError, match="3N/8"):
            evolve(FREE_G, None, Field(grid, noise), 0.1, 1.0, 0.01)


class TestPropagationCheck:
    """Tests for the coherent-state propagation check."""

    @pytest.fixture
    def wide_grid(self):
        return Grid(1, 1024, 5.0)

    def test_free_transport(self, wide_grid):
        h = 0.05
        report = propagation_check(builtin("free"), [-1.0], [1.0], h, 2.0, wide_grid, x_stride=2)

        assert report.passed
        assert report.max_x_deviation <= 0.1 * math.sqrt(h)
        assert report.max_xi_deviation <= 0.1 * math.sqrt(h)
        assert report.decay_gap <= 1e-6
        assert report.ray_x[-1, 0] == pytest.approx(1.0, abs=1e-8)
        assert len(report.times) == 21

    def test_free_transport_across_box_edge(self, wide_grid):
        h = 0.05
        report = propagation_check(builtin("free"), [4.0], [1.0], h, 2.0, wide_grid, x_stride=2)

        assert report.passed
        assert report.ray_x[-1, 0] == pytest.approx(6.0, abs=1e-8)
        assert report.centroid_x[-1, 0] == pytest.approx(-4.0, abs=0.1 * math.sqrt(h))
        assert report.max_x_deviation <= 0.1 * math.sqrt(h)

    def test_harmonic_quarter_period(self):
        h = 0.05
        report = propagation_check(builtin("harmonic"), [1.0], [0.0], h, math.pi / 2, Grid(1, 512, 5.0), x_stride=2)

        assert report.passed
        assert report.centroid_x[-1, 0] == pytest.approx(0.0, abs=0.1 * math.sqrt(h))
        assert report.centroid_xi[-1, 0] == pytest.approx(-1.0, abs=0.1 * math.sqrt(h))

    def test_constant_damping_decay(self, wide_grid):
        report = propagation_check(builtin("damped_free", {"gamma": 0.5}), [-1.0], [1.0], 0.05, 1.0, wide_grid,
                                   x_stride=4)

        assert report.decay_gap <= 1e-6
        assert report.ray_log_amplitude[-1] == pytest.approx(-1.0, abs=1e-10)

    def test_parts_tuple(self, wide_grid):
        report = propagation_check((FREE_G, None), [-1.0], [1.0], 0.05, 1.0, wide_grid, x_stride=4)

        assert report.symbol == "g+f"
        assert report.passed

    def test_report_serialization(self, wide_grid, tmp_path):
        report = propagation_check(builtin("free"), [0.0], [1.0], 0.05, 1.0, wide_grid, x_stride=4, checkpoints=5)
        payload = report.to_dict()

        assert payload["dynamical_surrogate"] is True
        assert payload["bound"] == pytest.approx(2 * math.sqrt(0.05))
        json.dumps(payload)
        path = report.to_csv(tmp_path / "snapshots.csv")
        assert "t,centroid_x_0,centroid_xi_0,ray_x_0,ray_xi_0,field_log_mass,ray_log_amp" in path.read_text()
        assert report.final_field.norm_squared() == pytest.approx(1.0, abs=1e-10)

    def test_rejects_non_additive_symbol(self, wide_grid):
        mixed = Symbol(lambda x, xi: x[0] * xi[0] + 0j, 1.0, name="mixed")

        with pytest.raises(ValidationError, match="additive"):
            propagation_check(mixed, [0.0], [1.0], 0.05, 1.0, wide_grid)
