import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wprcn.tensor import Parameter, Tensor
from wprcn.tensor.gradcheck import check_gradients
from wprcn.wavelet import (
    DEFAULT_ALPHAS,
    DensityState,
    batch_estimate,
    bspline_dphi,
    bspline_phi,
    margin,
    radial_phi,
    translation_grid,
)


def cox_de_boor(x: float, m: int) -> float:
    """Cardinal B-spline of order m on knots 0..m by the recursive definition."""
    t = list(range(m + 1))

    def b(x, k, i):
        if k == 0:
            return 1.0 if t[i] <= x < t[i + 1] else 0.0
        left = (x - t[i]) / (t[i + k] - t[i]) * b(x, k - 1, i)
        right = (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * b(x, k - 1, i + 1)
        return left + right

    return b(x, m - 1, 0)


class TestBSpline:
    @pytest.mark.parametrize(
        "x,m,expected", [(1.0, 2, 1.0), (1.5, 3, 0.75), (2.0, 4, 2 / 3), (-0.5, 2, 0.0), (-0.5, 3, 0.0), (-0.5, 4, 0.0)]
    )
    def test_table_values(self, x, m, expected):
        assert bspline_phi(x, m) == pytest.approx(expected, abs=1e-15)

    def test_cubic_branches_agree_at_two(self):
        left = (-3 * 8 + 12 * 4 - 12 * 2 + 4) / 6
        right = (3 * 8 - 24 * 4 + 60 * 2 - 44) / 6
        assert left == pytest.approx(right, abs=1e-15) == pytest.approx(2 / 3)

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_matches_recursive_definition(self, m):
        xs = np.random.default_rng(m).uniform(-1, m + 1, 300)
        expected = np.array([cox_de_boor(x, m) for x in xs])
        np.testing.assert_allclose(bspline_phi(xs, m), expected, atol=1e-13)

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_derivative_matches_finite_differences(self, m):
        xs = np.random.default_rng(10 + m).uniform(0.01, m - 0.01, 200)
        xs = xs[np.abs(xs - np.round(xs)) > 1e-3]
        h = 1e-6
        fd = (bspline_phi(xs + h, m) - bspline_phi(xs - h, m)) / (2 * h)
        np.testing.assert_allclose(bspline_dphi(xs, m), fd, atol=1e-6)

    def test_margin(self):
        assert [margin(m) for m in (2, 3, 4)] == [1, 1, 2]
        with pytest.raises(ValueError):
            margin(5)


class TestRadialPhi:
    def test_peak_linear(self):
        assert radial_phi([0.0], 0, [0], 2) == 1.0

    def test_linear_branch(self):
        assert radial_phi([0.9], 0, [0], 2) == pytest.approx(0.1, abs=1e-15)

    def test_2d_grid_center(self):
        assert radial_phi([0.5, 0.5], 1, [1, 1], 3) == pytest.approx(1.5)

    def test_zero_outside_radius(self):
        assert radial_phi([0.0, 0.0], 2, [1, 1], 2) == 0.0


class TestGrid:
    @pytest.mark.parametrize("m,j0,n", [(2, 0, 1), (3, 2, 2), (4, 1, 2), (4, 3, 1)])
    def test_extent_and_order(self, m, j0, n):
        u = margin(m)
        grid = translation_grid(j0, n, m)
        per_dim = 2**j0 + 2 * u + 1
        assert grid.shape == (per_dim**n, n)
        assert grid[:, 0].min() == -u and grid[:, 0].max() == 2**j0 + u
        assert [tuple(k) for k in grid] == sorted(tuple(k) for k in grid)


class TestPhiVector:
    @pytest.mark.parametrize("m,j0,n", [(2, 2, 1), (3, 3, 2), (4, 2, 2), (2, 1, 3)])
    def test_matches_bruteforce_scan(self, m, j0, n):
        state = DensityState(m, j0, n)
        rng = np.random.default_rng(3)
        for x in rng.random((20, n)):
            brute = np.array([radial_phi(x, j0, k, m) for k in state.grid])
            np.testing.assert_allclose(state.phi_vector(x), brute, atol=1e-13)
            assert np.count_nonzero(brute) <= (m + 1) ** n
            assert np.all(brute >= 0)

    def test_grid_center_entry(self):
        state = DensityState(3, 2, 2)
        x = np.array([0.25, 0.75])
        k_idx = next(i for i, k in enumerate(state.grid) if tuple(k) == (1, 3))
        assert state.phi_vector(x)[k_idx] == pytest.approx(2.0**2 * bspline_phi(1.5, 3))


class TestUpdate:
    def test_alpha_one_replaces(self):
        state = DensityState(2, 3, 2)
        state.update([0.2, 0.3])
        state.update([0.7, 0.6])
        np.testing.assert_array_equal(state.w[:, 0], state.phi_vector([0.7, 0.6]))

    @pytest.mark.parametrize("alpha", [0.5, 0.1, 0.01])
    def test_geometric_convergence(self, alpha):
        state = DensityState(3, 2, 1, alphas=(alpha,))
        x = np.array([0.4])
        target = state.phi_vector(x)
        for t in range(1, 41):
            state.update(x)
            np.testing.assert_allclose(state.w[:, 0], (1 - (1 - alpha) ** t) * target, rtol=1e-12, atol=1e-15)

    def test_matches_dense_ema(self):
        rng = np.random.default_rng(4)
        state = DensityState(4, 2, 2)
        dense = np.zeros((state.n_points, state.gamma))
        for x in rng.random((300, 2)):
            state.update(x)
            dense = (1 - state.alphas) * dense + state.alphas * state.phi_vector(x)[:, None]
        np.testing.assert_allclose(state.w, dense, atol=1e-13)

    def test_underflow_rescale_keeps_values(self):
        state = DensityState(2, 2, 1, alphas=(0.5,))
        rng = np.random.default_rng(5)
        dense = np.zeros(state.n_points)
        for x in rng.random((600, 1)):
            state.update(x)
            dense = 0.5 * dense + 0.5 * state.phi_vector(x)
        np.testing.assert_allclose(state.w[:, 0], dense, atol=1e-13)

    def test_harmonic_matches_batch(self):
        rng = np.random.default_rng(6)
        X = rng.random((500, 2))
        state = DensityState(3, 3, 2, schedule="harmonic")
        state.update_many(X)
        np.testing.assert_allclose(state.w[:, 0], batch_estimate(X, 3, 3).w[:, 0], atol=1e-12, rtol=0)

    def test_clamps_out_of_range(self):
        state = DensityState(2, 2, 1)
        state.update([1.7])
        np.testing.assert_array_equal(state.w[:, 0], state.phi_vector([1.0]))

    def test_dimension_mismatch(self):
        state = DensityState(2, 2, 2)
        with pytest.raises(ValueError):
            state.update([0.5])
        with pytest.raises(ValueError):
            state.density([0.5, 0.5, 0.5])

    def test_update_count(self):
        state = DensityState(2, 1, 1)
        state.update_many(np.linspace(0, 1, 7)[:, None])
        assert state.update_count == 7

    def test_touched_entries_bounded_and_flat(self):
        m, n = 3, 2
        state = DensityState(m, 4, n)
        rng = np.random.default_rng(7)
        counts = []
        for x in rng.random((3000, n)):
            state.update(x)
            counts.append(state.last_update_touched)
        bound = 2 * (m + 1) ** n * state.gamma
        assert max(counts) <= bound
        assert np.mean(counts[:100]) == pytest.approx(np.mean(counts[-100:]), rel=0.2)
        assert bound < state.n_points * state.gamma

    def test_invalid_alphas(self):
        for alphas in [(), (1.0, 1.0), (0.1, 0.5), (1.5,), (0.0,)]:
            with pytest.raises(ValueError):
                DensityState(2, 1, 1, alphas=alphas)


class TestDensity:
    def test_zero_weights(self):
        np.testing.assert_array_equal(DensityState(2, 3, 2).density([0.3, 0.4]), np.zeros(5))

    def test_single_update_sum_of_squares(self):
        state = DensityState(4, 3, 2)
        x = np.array([0.37, 0.61])
        state.update(x)
        phi = state.phi_vector(x)
        assert state.density(x)[0] == pytest.approx(np.sum(phi**2), rel=1e-14)

    def test_density_many_matches_pointwise(self):
        rng = np.random.default_rng(8)
        state = DensityState(3, 2, 2)
        state.update_many(rng.random((50, 2)))
        pts = rng.random((30, 2))
        np.testing.assert_allclose(
            state.density_many(pts), np.array([state.density(p) for p in pts]), atol=1e-14
        )

    def test_uniform_integrates_to_one(self):
        rng = np.random.default_rng(9)
        state = DensityState(2, 3, 1, schedule="harmonic")
        state.update_many(rng.random((10_000, 1)))
        grid = np.linspace(0, 1, 1000)
        integral = np.trapezoid(state.density_many(grid[:, None])[:, 0], grid)
        assert abs(integral - 1.0) <= 0.1

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_density_tensor_gradient(self, m):
        rng = np.random.default_rng(20 + m)
        state = DensityState(m, 3, 2)
        state.update_many(rng.random((200, 2)) * 0.6 + 0.2)
        h = Parameter(rng.uniform(0.25, 0.75, (6, 2)))
        proj = Tensor(rng.standard_normal((6, state.gamma)))
        np.testing.assert_allclose(state.density_tensor(h).data, state.density_many(h.data), atol=1e-14)
        assert check_gradients(lambda: (state.density_tensor(h) * proj).sum(), [h]) <= 1e-4

    def test_checkpoint_roundtrip(self):
        rng = np.random.default_rng(10)
        state = DensityState(4, 2, 2)
        state.update_many(rng.random((40, 2)))
        back = DensityState.from_records(state.to_records())
        np.testing.assert_array_equal(back.w, state.w)
        assert back.update_count == 40
        x = rng.random(2)
        np.testing.assert_array_equal(back.density(x), state.density(x))
        # streaming resumes identically
        state.update(x)
        back.update(x)
        np.testing.assert_array_equal(back.w, state.w)


class TestBatchEstimate:
    def test_one_sample(self):
        x = np.array([0.3, 0.8])
        est = batch_estimate([x], 2, 2)
        np.testing.assert_array_equal(est.w[:, 0], est.phi_vector(x))

    def test_permutation_bit_identical(self):
        rng = np.random.default_rng(11)
        X = rng.random((400, 2))
        a = batch_estimate(X, 3, 3).w
        b = batch_estimate(X[rng.permutation(400)], 3, 3).w
        np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("m", [2, 3, 4])
@pytest.mark.parametrize("j0", [1, 2, 3])
def test_partition_of_unity(m, j0):
    u = margin(m)
    lo, hi = u / 2**j0, 1 - u / 2**j0
    ks = np.arange(-u, 2**j0 + u + 1)
    for x in np.linspace(lo, hi, 50):
        total = bspline_phi(2**j0 * x - ks + m / 2, m).sum()
        assert total == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(
    m=st.sampled_from([2, 3, 4]),
    j0=st.integers(0, 4),
    n=st.integers(1, 2),
    points=st.lists(st.lists(st.floats(-0.5, 1.5), min_size=2, max_size=2), min_size=1, max_size=30),
)
def test_nonnegative_everywhere(m, j0, n, points):
    state = DensityState(m, j0, n)
    pts = np.array(points)[:, :n]
    for x in pts:
        state.update(x)
        assert np.all(state.w >= 0)
    assert np.all(state.density_many(pts) >= 0)
