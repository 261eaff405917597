import numpy as np
import pytest

from homfilt.averaging import (HomogenizedModel, StationaryAverager,
                               TabulationGrid, build_homogenized,
                               estimate_stationary_average, load_tabulated,
                               matrix_sqrt_psd, save_tabulated)
from homfilt.errors import NotPSDError, NotSymmetricError
from homfilt.models import MultiscaleModel

from conftest import const_mat

# Fast settings for unit tests; the acceptance suite uses the defaults.
FAST_CFG = StationaryAverager(burn_in=2.0, sample_horizon=32.0, dt=1e-3,
                              replicates=6)


def ou_model(diff_slow=None, drift_slow=None, obs_fn=None):
    """Fast OU block relaxing to x: frozen stationary law N(x, 1)."""
    return MultiscaleModel(
        dim_slow=1, dim_fast=1, dim_obs=1, dim_noise_slow=1, dim_noise_fast=1,
        drift_slow=drift_slow or (lambda x, z: -x + 0.5 * z),
        diff_slow=diff_slow or const_mat(1.0),
        drift_fast=lambda x, z: -(z - x),
        diff_fast=const_mat(np.sqrt(2.0)),
        obs_fn=obs_fn or (lambda x, z: x))


class TestEstimateStationaryAverage:
    def test_constant_integrand(self, rng):
        est, se = estimate_stationary_average(
            ou_model(), np.array([0.3]), lambda x, z: np.ones(z.shape[:-1]),
            FAST_CFG, rng)
        assert est == 1.0
        assert se == 0.0

    def test_ou_first_moment(self, rng):
        est, se = estimate_stationary_average(
            ou_model(), np.array([0.7]), lambda x, z: z[..., 0], FAST_CFG, rng)
        assert abs(est - 0.7) < 3 * se

    def test_ou_second_moment(self, rng):
        est, se = estimate_stationary_average(
            ou_model(), np.array([0.5]), lambda x, z: z[..., 0] ** 2,
            FAST_CFG, rng)
        assert abs(est - 1.25) < 3 * se

    def test_z_independent_integrand_zero_se(self, rng):
        est, se = estimate_stationary_average(
            ou_model(), np.array([2.0]), lambda x, z: x[..., 0], FAST_CFG, rng)
        assert est == 2.0
        assert se == 0.0

    def test_se_shrinks_with_horizon(self):
        # Doubling the sampling time should shrink the error bar roughly
        # like 1/sqrt(time); allow a factor-2 band around that.
        ses = []
        for horizon in (32.0, 62.0):
            cfg = StationaryAverager(burn_in=2.0, sample_horizon=horizon,
                                     dt=1e-3, replicates=8)
            _, se = estimate_stationary_average(
                ou_model(), np.array([0.0]), lambda x, z: z[..., 0], cfg,
                np.random.default_rng(99))
            ses.append(se)
        ratio = ses[1] / ses[0]
        assert 1.0 / (2 * np.sqrt(2)) < ratio < 2.0 / np.sqrt(2)


class TestMatrixSqrtPsd:
    def test_identity(self):
        assert np.array_equal(matrix_sqrt_psd(np.eye(2)), np.eye(2))

    def test_diagonal(self):
        s = matrix_sqrt_psd(np.diag([4.0, 9.0]))
        assert np.allclose(s, np.diag([2.0, 3.0]), atol=1e-12)

    def test_two_by_two_oracle(self):
        a = np.array([[2.0, 1.0], [1.0, 2.0]])
        s = matrix_sqrt_psd(a)
        # Eigendecomposition oracle: (sqrt(3)+1)/2 diagonal, (sqrt(3)-1)/2 off.
        expect = np.array([[(np.sqrt(3) + 1) / 2, (np.sqrt(3) - 1) / 2],
                           [(np.sqrt(3) - 1) / 2, (np.sqrt(3) + 1) / 2]])
        assert np.allclose(s, expect, atol=1e-12)
        assert np.abs(s @ s - a).max() < 1e-10

    def test_clipping_path(self):
        a = np.diag([1.0, -5e-11])
        s = matrix_sqrt_psd(a)
        assert s[1, 1] == 0.0
        assert np.abs(s @ s - np.diag([1.0, 0.0])).max() < 1e-10

    def test_not_symmetric(self):
        with pytest.raises(NotSymmetricError):
            matrix_sqrt_psd(np.array([[1.0, 0.1], [0.0, 1.0]]))

    def test_not_psd(self):
        with pytest.raises(NotPSDError):
            matrix_sqrt_psd(np.diag([1.0, -1e-3]))


class TestBuildHomogenized:
    def test_constant_diffusion_exact(self):
        model = ou_model(diff_slow=const_mat(1.0))
        grid = TabulationGrid(lows=(-1.0,), highs=(1.0,), counts=(3,))
        hm = build_homogenized(model, grid, FAST_CFG, root_seed=5)
        for node in hm.grid.nodes():
            assert np.allclose(hm.diffsq_avg(node), [[1.0]], atol=1e-12)
            assert np.allclose(hm.diff_avg(node), [[1.0]], atol=1e-12)

    def test_linear_drift_average(self):
        # b(x,z) = -x + 0.5 z averages to -0.5 x under N(x, 1).
        model = ou_model()
        grid = TabulationGrid(lows=(-1.0,), highs=(1.0,), counts=(3,))
        hm = build_homogenized(model, grid, FAST_CFG, root_seed=6)
        t = hm.table
        for i, node in enumerate(grid.nodes()):
            se = max(t["b_se"][i, 0], 1e-12)
            assert abs(t["b"][i, 0] - (-0.5 * node[0])) < 3 * se

    def test_z_squared_diffusion_average(self):
        # sigma^2 = 1 + z^2 averages to 2 + x^2.
        def diff(x, z):
            return np.sqrt(1.0 + z[..., :1] ** 2)[..., None]

        model = ou_model(diff_slow=diff)
        grid = TabulationGrid(lows=(0.0,), highs=(1.0,), counts=(2,))
        hm = build_homogenized(model, grid, FAST_CFG, root_seed=7)
        t = hm.table
        se = t["a_se"][1, 0, 0]
        assert abs(t["a"][1, 0, 0] - 3.0) < 3 * se

    def test_sigma_reproduces_a_at_nodes(self):
        model = ou_model()
        grid = TabulationGrid(lows=(-1.0,), highs=(1.0,), counts=(3,))
        hm = build_homogenized(model, grid, FAST_CFG, root_seed=8)
        for a, s in zip(hm.table["a"], hm.table["sigma"]):
            assert np.abs(s @ s - a).max() < 1e-8

    def test_multilinear_interpolation_exact_on_linear_data(self):
        model = ou_model()
        grid = TabulationGrid(lows=(-1.0,), highs=(1.0,), counts=(3,))
        hm = build_homogenized(model, grid, FAST_CFG, root_seed=9)
        nodes = grid.nodes()
        mid = 0.5 * (nodes[0] + nodes[1])
        expect = 0.5 * (hm.drift_avg(nodes[0]) + hm.drift_avg(nodes[1]))
        assert np.allclose(hm.drift_avg(mid), expect, atol=1e-12)

    def test_save_load_round_trip(self, tmp_path):
        model = ou_model()
        grid = TabulationGrid(lows=(-1.0,), highs=(1.0,), counts=(3,))
        hm = build_homogenized(model, grid, FAST_CFG, root_seed=10)
        path = str(tmp_path / "table.txt")
        save_tabulated(hm, path)
        hm2 = load_tabulated(path)
        probes = np.linspace(-1.2, 1.2, 7)[:, None]
        assert np.array_equal(hm.drift_avg(probes), hm2.drift_avg(probes))
        assert np.array_equal(hm.diffsq_avg(probes), hm2.diffsq_avg(probes))
        assert np.array_equal(hm.diff_avg(probes), hm2.diff_avg(probes))
        assert np.array_equal(hm.obs_avg(probes), hm2.obs_avg(probes))

    def test_determinism(self):
        model = ou_model()
        grid = TabulationGrid(lows=(-1.0,), highs=(1.0,), counts=(2,))
        h1 = build_homogenized(model, grid, FAST_CFG, root_seed=11)
        h2 = build_homogenized(model, grid, FAST_CFG, root_seed=11)
        assert np.array_equal(h1.table["b"], h2.table["b"])
        assert np.array_equal(h1.table["a"], h2.table["a"])
