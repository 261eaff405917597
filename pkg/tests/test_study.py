import numpy as np
import pytest

from homfilt import catalog
from homfilt.errors import HomfiltError, StudyAbortError
from homfilt.filtering import FilterConfig, run_full_filter, run_homogenized_filter
from homfilt.measures import default_basis, marginal_x, metric_d
from homfilt.models import ObservationPath
from homfilt.study import (StudyConfig, fit_loglog_slope, report_csv,
                           report_text, run_replication, run_study)


def small_config(**overrides):
    kw = dict(epsilons=(0.5, 0.25, 0.125), replications=4, horizon=0.5,
              n_particles=64, dt=0.02, root_seed=42, bootstrap_samples=50)
    kw.update(overrides)
    return StudyConfig(**kw)


class TestSlopeFit:
    def test_exact_sqrt_power_law(self):
        eps = (0.5, 0.25, 0.125, 0.0625)
        slope, intercept = fit_loglog_slope(eps, [0.3 * np.sqrt(e) for e in eps])
        assert abs(slope - 0.5) < 1e-12
        assert abs(intercept - np.log(0.3)) < 1e-12

    def test_constant_distances(self):
        eps = (0.5, 0.25, 0.125)
        slope, _ = fit_loglog_slope(eps, [0.2, 0.2, 0.2])
        assert abs(slope) < 1e-12

    def test_general_exponent(self):
        eps = (0.9, 0.5, 0.21, 0.07)
        slope, _ = fit_loglog_slope(eps, [1.7 * e ** 0.73 for e in eps])
        assert abs(slope - 0.73) < 1e-12

    def test_inverse_variance_weighting_used(self):
        # Corrupt one point but give it near-zero weight via a huge SE; the
        # fit should stay close to the clean slope.
        eps = np.array([0.5, 0.25, 0.125, 0.0625])
        means = 0.3 * np.sqrt(eps)
        means[-1] *= 3.0
        ses = np.array([1e-4, 1e-4, 1e-4, 10.0]) * means
        slope, _ = fit_loglog_slope(eps, means, ses)
        assert abs(slope - 0.5) < 1e-3


class TestRunStudySynthetic:
    def test_sqrt_injector_recovers_half(self):
        report = run_study(small_config(),
                           distance_fn=lambda eps, ei, ri: 0.3 * np.sqrt(eps))
        assert abs(report.slope - 0.5) < 1e-12

    def test_constant_injector_gives_zero_slope(self):
        report = run_study(small_config(),
                           distance_fn=lambda eps, ei, ri: 0.2)
        assert abs(report.slope) < 1e-12

    def test_abort_on_failures(self):
        def flaky(eps, ei, ri):
            if ri % 2 == 0:  # 50% failure rate
                raise HomfiltError("forced failure")
            return 0.1

        with pytest.raises(StudyAbortError):
            run_study(small_config(), distance_fn=flaky)

    def test_tolerated_failures_are_counted(self):
        def flaky(eps, ei, ri):
            if ei == 0 and ri == 0:
                raise HomfiltError("forced failure")
            return 0.1 * np.sqrt(eps) + 0.01 * ri

        report = run_study(small_config(replications=8), distance_fn=flaky)
        assert report.failures == (1, 0, 0)
        assert report.counts == (7, 8, 8)

    def test_report_serialization_deterministic(self):
        cfg = small_config()
        fn = lambda eps, ei, ri: 0.1 * np.sqrt(eps) + 0.003 * ri
        r1 = run_study(cfg, distance_fn=fn)
        r2 = run_study(cfg, distance_fn=fn)
        assert report_text(r1) == report_text(r2)
        assert report_csv(r1) == report_csv(r2)
        assert "epsilon,replication,distance" in report_csv(r1)


class TestRunReplication:
    def test_deterministic(self):
        cfg = small_config()
        model = catalog.make_model("ou_benchmark", epsilon=0.25)
        hm = catalog.make_analytic_homogenized("ou_benchmark")
        basis = default_basis(cfg.basis_count, 1)
        d1 = run_replication(model, hm, cfg, basis, 1, 2)
        d2 = run_replication(model, hm, cfg, basis, 1, 2)
        assert d1 == d2

    def test_self_comparison_bounded_by_particle_noise(self):
        # Model whose coefficients are already z-independent and equal to
        # their averages: only particle noise separates the two filters.
        cfg = small_config(n_particles=4096, horizon=0.5, dt=0.02)
        model = catalog.make_model("linear", epsilon=0.25)
        hm = catalog.make_analytic_homogenized("linear")
        basis = default_basis(cfg.basis_count, 1)
        d = run_replication(model, hm, cfg, basis, 0, 0)
        assert d <= 0.05

    def test_zero_steps_identical_delta_inits(self):
        # Point-mass initial ensembles and no observation steps: both
        # marginals are the same delta measure, so the distance is 0.
        model = catalog.make_model("ou_benchmark", epsilon=0.5)
        hm = catalog.make_analytic_homogenized("ou_benchmark")
        obs = ObservationPath(times=np.array([0.0]), increments=np.zeros((0, 1)))
        cfg = FilterConfig(n_particles=16, dt=0.02)

        def init_joint(rng, count):
            return np.full((count, 1), 0.3), np.full((count, 1), 0.3)

        def init_slow(rng, count):
            return np.full((count, 1), 0.3)

        full = run_full_filter(model, obs, init_joint, cfg,
                               np.random.default_rng(0))
        homog = run_homogenized_filter(hm, obs, init_slow, cfg,
                                       np.random.default_rng(1))
        basis = default_basis(16, 1)
        assert metric_d(marginal_x(full[-1], 1),
                        marginal_x(homog[-1], 1), basis) == 0.0


class TestRunStudyEndToEnd:
    def test_small_real_study_runs(self):
        cfg = small_config(replications=3, n_particles=32)
        report = run_study(cfg)
        assert len(report.mean_distances) == 3
        assert all(d > 0 for d in report.mean_distances)
        assert np.isfinite(report.slope)
        assert report.slope_ci[0] <= report.slope_ci[1]

    def test_threaded_matches_sequential(self):
        r1 = run_study(small_config(replications=4, n_particles=32, threads=1))
        r2 = run_study(small_config(replications=4, n_particles=32, threads=4))
        assert report_text(r1) == report_text(r2)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            small_config(epsilons=(0.5, 0.25))  # too few for a slope
        with pytest.raises(ValueError):
            small_config(epsilons=(0.25, 0.5, 0.125))  # not decreasing
