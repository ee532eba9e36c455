import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wprcn.awpg import (
    AwpgModel,
    GedConfig,
    best_threshold,
    f1_score,
    select_config,
    train_awpg,
)
from wprcn.tensor import LOG_EPS, SGD, Tensor, no_grad
from wprcn.tensor.gradcheck import check_gradients


def zero_all(model):
    for p in model.parameters():
        p.data = np.zeros_like(p.data)


def toy(n_samples=10, n=2, length=12, seed=0):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, length)
    X = 0.5 + 0.3 * np.sin(2 * np.pi * (t[None, None, :] * 2 + rng.random((n_samples, n, 1))))
    return X, np.zeros(n_samples, dtype=int)


def brute_f1(density, unseen):
    """Best F1 over thresholds below, between and above all distinct values."""
    vals = np.unique(density)
    cuts = np.concatenate([[vals[0] - 1], (vals[:-1] + vals[1:]) / 2, [vals[-1] + 1]])
    return max(f1_score(density < c, unseen) for c in cuts)


@pytest.fixture
def model():
    return AwpgModel(2, GedConfig(hidden=4, seed=1))


@pytest.fixture(scope="module")
def trained():
    X, y = toy()
    return train_awpg(X, y, GedConfig(hidden=4, epochs=3, seed=2)), X


class TestEncode:
    def test_zero_weights_give_half(self, model):
        zero_all(model)
        lat = model.encode(np.zeros((3, 7, 2)))
        np.testing.assert_array_equal(lat.y.data, 0.5)

    def test_shapes_and_final_state(self, model):
        lat = model.encode(np.random.default_rng(0).random((4, 9, 2)))
        assert lat.y.shape == (4, 9, 2)
        np.testing.assert_array_equal(lat.h.data, lat.y.data[:, -1])
        assert np.all((lat.y.data > 0) & (lat.y.data < 1))

    def test_empty_series(self, model):
        with pytest.raises(ValueError):
            model.encode(np.zeros((1, 0, 2)))


class TestReconstruct:
    def test_zero_weights_bias(self, model):
        zero_all(model)
        model.head.bias.data = np.array([0.25, -1.0])
        out = model.reconstruct(Tensor(np.full((2, 2), 0.5)), 6).data
        assert out.shape == (2, 6, 2)
        np.testing.assert_array_equal(out, np.broadcast_to([0.25, -1.0], out.shape))

    def test_l1_decreases_monotonically(self):
        X, y = toy(n_samples=1, length=8)
        m = AwpgModel(2, GedConfig(hidden=4, lam=0.0, seed=3))
        x = Tensor(np.transpose(X, (0, 2, 1)))
        opt = SGD(m.parameters(), lr=0.05)
        losses = []
        for _ in range(50):
            opt.zero_grad()
            loss = m.loss(x, update=False)
            loss.backward()
            opt.step()
            losses.append(loss.item())
        assert all(b < a for a, b in zip(losses, losses[1:]))


class TestAdaptive:
    def test_zero_weights_uniform(self, model):
        zero_all(model)
        theta, idx = model.adaptive_select(np.array([[0.3, 0.6]]))
        np.testing.assert_allclose(theta, 0.2, atol=1e-15)
        assert idx[0] == 0

    def test_simplex(self, model):
        theta, _ = model.adaptive_select(np.random.default_rng(1).random((20, 2)))
        np.testing.assert_allclose(theta.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(theta > 0)

    @pytest.mark.parametrize("c", [1e-3, 0.5, 7.0, 1e3])
    def test_argmax_invariant_to_scaling(self, model, c):
        h = Tensor(np.random.default_rng(2).random((30, 2)))
        with no_grad():
            logits = model.adapt2(model.adapt1(h).tanh()).data
        _, idx = model.adaptive_select(h)
        scaled = np.exp(c * logits - (c * logits).max(axis=1, keepdims=True))
        np.testing.assert_array_equal(np.argmax(scaled, axis=1), idx)


class TestLoss:
    def test_lambda_zero_is_l1(self):
        m = AwpgModel(2, GedConfig(hidden=4, lam=0.0, seed=4))
        x = Tensor(np.random.default_rng(3).random((3, 5, 2)))
        with no_grad():
            recon = m.reconstruct(m.encode(x).h, 5).data
        assert m.loss(x, update=False).item() == pytest.approx(np.mean(np.abs(recon - x.data)), rel=1e-14)

    def test_perfect_reconstruction(self, model):
        zero_all(model)
        model.config = GedConfig(hidden=4, lam=0.0)
        model.head.bias.data = np.array([0.1, 0.9])
        x = Tensor(np.broadcast_to([0.1, 0.9], (2, 6, 2)).copy())
        assert model.loss(x, update=False).item() == 0.0

    def test_zero_density_floor(self, model):
        x = Tensor(np.random.default_rng(4).random((2, 5, 2)))
        with no_grad():
            recon = np.mean(np.abs(model.reconstruct(model.encode(x).h, 5).data - x.data))
        total = model.loss(x, update=False).item()
        assert total - recon == pytest.approx(-0.1 * np.log(LOG_EPS), rel=1e-12)
        assert np.isfinite(total)

    def test_empty_batch(self, model):
        with pytest.raises(ValueError):
            model.loss(Tensor(np.zeros((0, 5, 2))))

    def test_gradient(self):
        m = AwpgModel(2, GedConfig(hidden=3, latent_m=3, seed=5))
        x = Tensor(np.random.default_rng(5).random((3, 4, 2)))
        m.latent_state.update_many(np.random.default_rng(6).random((40, 2)) * 0.4 + 0.3)
        params = [m.enc1.w_ih, m.enc2.w_hh, m.dec2.w_ih, m.head.weight, m.adapt1.weight, m.adapt2.bias]
        assert check_gradients(lambda: m.loss(x, update=False), params) <= 1e-4

    def test_density_weights_outside_optimizer(self):
        m = AwpgModel(2, GedConfig(hidden=3, seed=6))
        x = Tensor(np.random.default_rng(7).random((4, 5, 2)))
        m.latent_state.update_many(np.random.default_rng(8).random((30, 2)))
        registry = {id(p.data) for p in m.parameters()}
        assert id(m.latent_state._v) not in registry
        before = m.loss(x, update=False).item()
        with no_grad():
            h = m.encode(x).h.data
        idx, _ = m.latent_state.phi_sparse(h[0])
        w_saved = m.latent_state.w.copy()
        m.latent_state._v[idx, :] *= 1.5
        assert m.loss(x, update=False).item() != before
        m.latent_state._v = w_saved / m.latent_state._scale
        opt = SGD(m.parameters(), lr=0.1)
        m.loss(x, update=False).backward()
        opt.step()
        np.testing.assert_array_equal(m.latent_state.w, w_saved)


class TestTrain:
    def test_loss_decreases(self):
        X, y = toy()
        m = train_awpg(X, y, GedConfig(hidden=8, epochs=20, batch_size=5, seed=7))
        assert m.loss_history[-1] < m.loss_history[0]

    def test_update_count(self, trained):
        m, X = trained
        assert m.latent_state.update_count == 3 * len(X)

    def test_deterministic(self, trained):
        m, X = trained
        again = train_awpg(X, np.zeros(len(X), dtype=int), GedConfig(hidden=4, epochs=3, seed=2))
        for (name, a), (_, b) in zip(m.state_dict().items(), again.state_dict().items()):
            np.testing.assert_array_equal(a, b, err_msg=name)
        np.testing.assert_array_equal(m.feature_states[7].w, again.feature_states[7].w)

    def test_trains_on_designated_class_only(self):
        X, _ = toy(n_samples=8)
        y = np.array([0, 1] * 4)
        m = train_awpg(X, y, GedConfig(hidden=4, epochs=2, train_class=1, seed=8))
        assert m.latent_state.update_count == 2 * 4
        assert m.feature_states[0].update_count == 4 * X.shape[2]

    def test_missing_class(self):
        X, y = toy(n_samples=4)
        with pytest.raises(ValueError):
            train_awpg(X, y, GedConfig(train_class=2))


class TestFeatures:
    def test_contract(self, trained):
        m, X = trained
        P = m.generate_features(np.transpose(X, (0, 2, 1)))
        assert P.shape == (len(X), 15, X.shape[2])
        assert np.all(P >= 0)
        assert [(s.m, s.j0) for s in m.feature_states] == [(mm, j) for mm in (2, 3, 4) for j in (1, 2, 3, 4, 5)]

    def test_identical_inputs_identical_features(self, trained):
        m, X = trained
        steps = np.transpose(X[[0, 0]], (0, 2, 1))
        P = m.generate_features(steps)
        np.testing.assert_array_equal(P[0], P[1])
        # BLAS may sum in a different order for another batch shape
        np.testing.assert_allclose(m.generate_features(steps[0]), P[0], rtol=1e-12)

    def test_untrained(self, model):
        with pytest.raises(RuntimeError):
            model.generate_features(np.zeros((5, 2)))

    def test_checkpoint_roundtrip(self, trained, tmp_path):
        m, X = trained
        m.beta = 0.75
        path = tmp_path / "awpg.ckpt"
        m.save(path)
        back = AwpgModel.load(path)
        assert len(back.feature_states) + 1 == 16 and back.beta == 0.75
        steps = np.transpose(X, (0, 2, 1))
        np.testing.assert_array_equal(back.generate_features(steps), m.generate_features(steps))


class TestThreshold:
    def test_perfectly_separated(self):
        dens = np.array([1.0] * 5 + [0.0] * 4)
        unseen = np.array([False] * 5 + [True] * 4)
        beta, f1 = best_threshold(dens, unseen)
        assert f1 == 1.0 and 0 < beta <= 1

    def test_all_equal(self):
        unseen = np.array([True, False, True, True, False])
        beta, f1 = best_threshold(np.full(5, 0.3), unseen)
        assert f1 == pytest.approx(2 * 3 / (2 * 3 + 2)) == brute_f1(np.full(5, 0.3), unseen)
        assert beta > 0.3

    def test_single_class(self):
        with pytest.raises(ValueError):
            best_threshold(np.arange(3.0), np.array([True, True, True]))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=25))
    def test_matches_midpoint_bruteforce(self, pairs):
        dens = np.array([p[0] / 3 for p in pairs])
        unseen = np.array([p[1] for p in pairs])
        if unseen.all() or not unseen.any():
            return
        beta, f1 = best_threshold(dens, unseen)
        assert f1 == brute_f1(dens, unseen)
        assert f1_score(dens < beta, unseen) == f1

    def test_select_config_prefers_first_on_tie(self, trained):
        m, X = trained
        Xv = np.concatenate([X, X[::-1] * 0.2])
        yv = np.array([0] * len(X) + [1] * len(X))
        best, beta, f1 = select_config([m, m], Xv, yv)
        assert best is m and m.beta == beta and 0 <= f1 <= 1
