import numpy as np
import pytest

from sflab.conv import precompute
from sflab.data import Dataset, random_split
from sflab.errors import DivergenceDetected, VariantInputMismatch
from sflab.graph import Graph, erdos_renyi, eigendecompose, normalized_laplacian
from sflab.model import (
    Adam,
    Mlp,
    TfgnnModel,
    TrainConfig,
    accuracy,
    filter_learning_model,
    load_checkpoint,
    mlp_backward,
    mlp_forward,
    model_backward,
    model_forward,
    mse_loss,
    save_checkpoint,
    softmax_cross_entropy,
    train,
)
from sflab.trig import TrigParams, taylor_tables


def naive_mlp(weights, biases, X, dropout_masks=None):
    """Independent forward pass coded from scratch."""
    h = X
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = h @ w + b
        if i < len(weights) - 1:
            z = np.where(z > 0, z, 0.0)
            if dropout_masks is not None and dropout_masks[i] is not None:
                z = z * dropout_masks[i]
        h = z
    return h


def flatten_params(model):
    return np.concatenate([p.ravel() for p in model.parameters()])


def set_params(model, vec):
    offset = 0
    for p in model.parameters():
        p[...] = vec[offset : offset + p.size].reshape(p.shape)
        offset += p.size


def loss_at(model, operand, X, data, vec, loss_kind):
    set_params(model, vec.copy())
    logits, _ = model_forward(model, operand, X, train_mode=False)
    if loss_kind == "ce":
        loss, _ = softmax_cross_entropy(logits, data["labels"], data["mask"])
    else:
        loss, _ = mse_loss(logits, data["targets"], data["mask"])
    return loss


class TestMlp:
    def test_zero_weights_zero_output(self):
        mlp = Mlp((3, 4, 2), dropout=0.0)
        for w in mlp.weights:
            w[...] = 0.0
        out, _ = mlp_forward(mlp, np.random.default_rng(0).standard_normal((5, 3)))
        np.testing.assert_array_equal(out, np.zeros((5, 2)))

    def test_single_identity_layer(self):
        mlp = Mlp((3, 3), dropout=0.0)
        mlp.weights[0][...] = np.eye(3)
        mlp.biases[0][...] = 0.0
        X = np.random.default_rng(1).standard_normal((4, 3))
        out, _ = mlp_forward(mlp, X)
        np.testing.assert_array_equal(out, X)

    def test_matches_naive_forward(self):
        rng = np.random.default_rng(2)
        mlp = Mlp((6, 8, 3), dropout=0.0, rng=rng)
        X = rng.standard_normal((10, 6))
        out, _ = mlp_forward(mlp, X)
        oracle = naive_mlp(mlp.weights, mlp.biases, X)
        assert np.abs(out - oracle).max() < 1e-12

    def test_dropout_only_in_train_mode(self):
        rng = np.random.default_rng(3)
        mlp = Mlp((4, 16, 2), dropout=0.9, rng=rng)
        X = rng.standard_normal((6, 4))
        a, _ = mlp_forward(mlp, X, train_mode=False)
        b, _ = mlp_forward(mlp, X, train_mode=False)
        assert np.array_equal(a, b)
        c, _ = mlp_forward(mlp, X, train_mode=True,
                           rng=np.random.default_rng(0))
        assert not np.array_equal(a, c)

    def test_seeded_dropout_reproducible(self):
        rng = np.random.default_rng(4)
        mlp = Mlp((4, 16, 2), dropout=0.5, rng=rng)
        X = rng.standard_normal((6, 4))
        a, _ = mlp_forward(mlp, X, True, np.random.default_rng(7))
        b, _ = mlp_forward(mlp, X, True, np.random.default_rng(7))
        assert np.array_equal(a, b)


def build_setup(variant, seed, n=12, m=5, classes=3, K=3, D=6):
    g = erdos_renyi(n, 0.4, seed=seed)
    L = normalized_laplacian(g)
    rng = np.random.default_rng(seed + 50)
    X = rng.standard_normal((n, m))
    model = TfgnnModel.build(variant, m, classes, hidden=(4,), dropout=0.0,
                             K=K, omega=0.3 * np.pi, D=D, seed=seed)
    # randomize the filter so coefficient gradients are exercised
    model.set_filter(0.1 * rng.standard_normal(K + 1),
                     0.1 * rng.standard_normal(K + 1) + np.eye(K + 1)[0])
    labels = rng.integers(0, classes, size=n)
    mask = np.zeros(n, dtype=bool)
    mask[: n // 2] = True
    operand = L if variant == "medium" else precompute(L, X, D)
    Xin = X if variant == "medium" else None
    return model, operand, Xin, {"labels": labels, "mask": mask,
                                 "targets": rng.standard_normal((n, classes))}


class TestModelForward:
    def test_identity_filter_identity_mlp_returns_features(self):
        n, m = 10, 4
        g = erdos_renyi(n, 0.4, seed=0)
        L = normalized_laplacian(g)
        X = np.random.default_rng(0).standard_normal((n, m))
        mlp = Mlp((m, m), dropout=0.0)
        mlp.weights[0][...] = np.eye(m)
        mlp.biases[0][...] = 0.0
        trig = TrigParams.identity(2, 0.5)
        tables = taylor_tables(2, 0.5, 6)
        medium = TfgnnModel("medium", mlp, trig, tables)
        z, _ = model_forward(medium, L, X)
        np.testing.assert_allclose(z, X, atol=1e-12)
        feats = precompute(L, X, 6)
        large = TfgnnModel("large", mlp, trig, tables)
        z2, _ = model_forward(large, feats)
        np.testing.assert_allclose(z2, X, atol=1e-12)

    def test_zero_features_zero_logits(self):
        model, operand, Xin, _ = build_setup("medium", seed=1)
        for b in model.mlp.biases:
            b[...] = 0.0
        z, _ = model_forward(model, operand, np.zeros_like(Xin))
        np.testing.assert_allclose(z, 0.0, atol=1e-12)

    def test_variants_agree_with_linear_mlp(self):
        # with a single bias-free layer the convolution and the transform
        # commute, so both orderings give the same logits
        n, m, c = 14, 5, 3
        g = erdos_renyi(n, 0.3, seed=2)
        L = normalized_laplacian(g)
        rng = np.random.default_rng(3)
        X = rng.standard_normal((n, m))
        W = rng.standard_normal((m, c))
        K, D = 3, 8
        trig = TrigParams(K, 0.4 * np.pi, alpha=rng.standard_normal(K + 1),
                          beta=rng.standard_normal(K + 1))
        tables = taylor_tables(K, 0.4 * np.pi, D)

        def linear_mlp():
            mlp = Mlp((m, c), dropout=0.0)
            mlp.weights[0][...] = W
            mlp.biases[0][...] = 0.0
            return mlp

        medium = TfgnnModel("medium", linear_mlp(), trig, tables)
        za, _ = model_forward(medium, L, X)
        large = TfgnnModel("large", linear_mlp(), trig, tables)
        zb, _ = model_forward(large, precompute(L, X, D))
        assert np.abs(za - zb).max() < 1e-10

    def test_variant_input_mismatch(self):
        model, operand, Xin, _ = build_setup("medium", seed=4)
        feats = precompute(operand, Xin, model.tables.D)
        with pytest.raises(VariantInputMismatch):
            model_forward(model, feats)
        large = TfgnnModel("large", model.mlp, model.trig, model.tables)
        with pytest.raises(VariantInputMismatch):
            model_forward(large, operand, Xin)

    def test_conv_parameter_count(self):
        model, *_ = build_setup("medium", seed=5, K=7)
        assert model.n_conv_params == 2 * (7 + 1)


class TestGradients:
    def test_zero_upstream_gradient(self):
        model, operand, Xin, data = build_setup("medium", seed=6)
        logits, cache = model_forward(model, operand, Xin)
        grads = model_backward(model, cache, np.zeros_like(logits))
        for g in grads.as_list():
            np.testing.assert_array_equal(g, np.zeros_like(g))

    def test_mse_gradient_zero_at_optimum(self):
        model, operand, Xin, data = build_setup("medium", seed=7)
        logits, cache = model_forward(model, operand, Xin)
        loss, d = mse_loss(logits, logits.copy(), None)
        assert loss == 0.0
        np.testing.assert_array_equal(d, np.zeros_like(d))

    @pytest.mark.parametrize("variant", ["medium", "large"])
    @pytest.mark.parametrize("loss_kind", ["ce", "mse"])
    def test_finite_difference_check(self, variant, loss_kind):
        for seed in range(5):
            model, operand, Xin, data = build_setup(variant, seed=seed)
            logits, cache = model_forward(model, operand, Xin)
            if loss_kind == "ce":
                _, dlogits = softmax_cross_entropy(logits, data["labels"],
                                                   data["mask"])
            else:
                _, dlogits = mse_loss(logits, data["targets"], data["mask"])
            grads = model_backward(model, cache, dlogits)
            analytic = np.concatenate([g.ravel() for g in grads.as_list()])
            base = flatten_params(model)
            h = 1e-5
            for idx in range(0, base.size, max(1, base.size // 25)):
                up = base.copy()
                up[idx] += h
                down = base.copy()
                down[idx] -= h
                fd = (loss_at(model, operand, Xin, data, up, loss_kind)
                      - loss_at(model, operand, Xin, data, down, loss_kind)) / (2 * h)
                denom = max(abs(fd), abs(analytic[idx]), 1e-8)
                assert abs(fd - analytic[idx]) / denom < 1e-4, (
                    variant, loss_kind, seed, idx
                )
            set_params(model, base)

    def test_variant_filter_gradients_agree_for_linear_mlp(self):
        n, m, c = 12, 4, 3
        g = erdos_renyi(n, 0.4, seed=8)
        L = normalized_laplacian(g)
        rng = np.random.default_rng(9)
        X = rng.standard_normal((n, m))
        W = rng.standard_normal((m, c))
        K, D = 3, 6
        trig = TrigParams(K, 0.4, alpha=rng.standard_normal(K + 1),
                          beta=rng.standard_normal(K + 1))
        tables = taylor_tables(K, 0.4, D)
        targets = rng.standard_normal((n, c))
        mask = np.ones(n, dtype=bool)

        grads = {}
        for variant in ("medium", "large"):
            mlp = Mlp((m, c), dropout=0.0)
            mlp.weights[0][...] = W
            mlp.biases[0][...] = 0.0
            model = TfgnnModel(variant, mlp, trig, tables)
            operand = L if variant == "medium" else precompute(L, X, D)
            logits, cache = model_forward(model, operand,
                                          X if variant == "medium" else None)
            _, d = mse_loss(logits, targets, mask)
            grads[variant] = model_backward(model, cache, d)
        assert np.abs(grads["medium"].alpha - grads["large"].alpha).max() < 1e-8
        assert np.abs(grads["medium"].beta - grads["large"].beta).max() < 1e-8


class TestTraining:
    def make_dataset(self, n=40, m=6, classes=2, seed=0, edgeless=False):
        if edgeless:
            graph = Graph(n=n, edges=())
        else:
            graph = erdos_renyi(n, 0.2, seed=seed)
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, m))
        labels = (X[:, 0] > 0).astype(np.int64)
        # push the classes apart so the data is separable with a margin
        X[:, 0] += np.where(labels == 1, 0.25, -0.25)
        if classes > 2:
            labels = rng.integers(0, classes, size=n)
        return Dataset(graph=graph, features=X, labels=labels,
                       masks=random_split(n, seed=seed))

    def test_zero_learning_rate_freezes_parameters(self):
        ds = self.make_dataset(seed=1)
        L = normalized_laplacian(ds.graph)
        model = TfgnnModel.build("medium", 6, 2, hidden=(4,), dropout=0.0,
                                 K=2, omega=0.5, D=4, seed=0)
        before = flatten_params(model).copy()
        cfg = TrainConfig(lr=0.0, weight_decay=0.0, dropout=0.0, max_epochs=5,
                          patience=10, seed=0)
        train(model, ds, L, cfg)
        after = flatten_params(model)
        assert np.array_equal(before, after)

    def test_separable_data_reaches_full_train_accuracy(self):
        # labels are a threshold of one feature column and the graph is
        # edgeless, so the transform alone separates the classes
        ds = self.make_dataset(n=60, seed=2, edgeless=True)
        L = normalized_laplacian(ds.graph)
        model = TfgnnModel.build("medium", 6, 2, hidden=(8,), dropout=0.0,
                                 K=2, omega=0.5, D=4, seed=1)
        cfg = TrainConfig(lr=0.05, weight_decay=0.0, dropout=0.0,
                          max_epochs=200, patience=200, seed=0)
        train(model, ds, L, cfg)
        logits, _ = model_forward(model, L, ds.features)
        assert accuracy(logits, ds.labels, ds.masks["train"]) == 1.0

    def test_determinism_across_runs(self):
        ds = self.make_dataset(seed=3)
        L = normalized_laplacian(ds.graph)
        histories = []
        finals = []
        for _ in range(2):
            model = TfgnnModel.build("medium", 6, 2, hidden=(4,), dropout=0.5,
                                     K=2, omega=0.5, D=4, seed=5)
            cfg = TrainConfig(lr=0.01, weight_decay=5e-4, dropout=0.5,
                              max_epochs=10, patience=50, seed=5)
            res = train(model, ds, L, cfg)
            histories.append([h["train_loss"] for h in res.history])
            finals.append(flatten_params(model).copy())
        assert histories[0] == histories[1]
        assert np.array_equal(finals[0], finals[1])

    def test_divergence_detected(self):
        ds = self.make_dataset(seed=4)
        L = normalized_laplacian(ds.graph)
        model = TfgnnModel.build("medium", 6, 2, hidden=(4,), dropout=0.0,
                                 K=2, omega=0.5, D=4, seed=0)
        model.mlp.weights[0][...] = 1e300
        cfg = TrainConfig(lr=0.1, weight_decay=0.0, dropout=0.0,
                          max_epochs=10, patience=10, seed=0, loss="mse")
        ds.targets = np.zeros((ds.n, 2))
        with np.errstate(over="ignore"), pytest.raises(DivergenceDetected):
            train(model, ds, L, cfg)

    def test_early_stopping_restores_best_snapshot(self):
        ds = self.make_dataset(seed=6)
        L = normalized_laplacian(ds.graph)
        model = TfgnnModel.build("medium", 6, 2, hidden=(4,), dropout=0.0,
                                 K=2, omega=0.5, D=4, seed=2)
        cfg = TrainConfig(lr=0.05, weight_decay=0.0, dropout=0.0,
                          max_epochs=60, patience=15, seed=2)
        res = train(model, ds, L, cfg)
        logits, _ = model_forward(model, L, ds.features)
        assert accuracy(logits, ds.labels, ds.masks["val"]) == pytest.approx(
            res.best_val
        )


class TestFilterLearning:
    def setup_problem(self, fid, n=60, m=8, seed=0):
        g = erdos_renyi(n, 0.4, seed=seed)
        L = normalized_laplacian(g)
        eig = eigendecompose(L)
        rng = np.random.default_rng(seed + 1)
        X = rng.standard_normal((n, m))
        from sflab.filters import filter_from_callable, get_filter

        if fid == "one":
            filt = filter_from_callable(lambda x: np.ones_like(x))
        elif fid == "zero":
            filt = filter_from_callable(lambda x: np.zeros_like(x))
        else:
            filt = get_filter(fid)
        fvals = np.asarray(filt(eig.eigenvalues))
        Y = (eig.eigenvectors * fvals) @ (eig.eigenvectors.T @ X)
        return eig, L, X, Y, filt

    def test_identity_target(self):
        eig, L, X, Y, filt = self.setup_problem("one")
        res = filter_learning_model(eig, L, X, Y, filt, "monomial", 6,
                                    lr=0.05, epochs=800, seed=0)
        assert res.metric < 1e-3

    def test_zero_target(self):
        # the optimum is the zero polynomial; the slow direction is the
        # lone zero eigenvalue, which couples weakly to random features
        eig, L, X, Y, filt = self.setup_problem("zero")
        res = filter_learning_model(eig, L, X, Y, filt, "monomial", 6,
                                    lr=0.05, epochs=5000, seed=0)
        assert res.metric < 1e-3

    def test_trains_toward_lse_quality(self):
        # gradient training should approach the directly solved least
        # squares optimum of the same objective (QR-based oracle)
        from sflab.model import basis_blocks

        eig, L, X, Y, filt = self.setup_problem("f5")
        res = filter_learning_model(eig, L, X, Y, filt, "monomial", 8,
                                    lr=0.05, epochs=8000, seed=0)
        B = np.stack(basis_blocks(L, X, "monomial", 8))
        A = B.reshape(9, -1).T
        coef, *_ = np.linalg.lstsq(A, Y.ravel(), rcond=None)
        opt_loss = float(np.sum((A @ coef - Y.ravel()) ** 2) / Y.size)
        signal = float(np.sum(Y * Y) / Y.size)
        # within 0.01% of the optimal variance reduction
        assert res.final_loss - opt_loss <= 1e-4 * signal
        assert res.metric < 5e-2

    def test_chebyshev_and_bernstein_blocks(self):
        eig, L, X, Y, filt = self.setup_problem("f1")
        for basis in ("chebyshev", "bernstein"):
            res = filter_learning_model(eig, L, X, Y, filt, basis, 5,
                                        lr=0.05, epochs=500, seed=0)
            assert np.isfinite(res.metric)


class TestCheckpoints:
    def test_round_trip(self, tmp_path):
        model, operand, Xin, _ = build_setup("medium", seed=11)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(model, path, config={"note": "test"})
        loaded, echo = load_checkpoint(path)
        assert echo == {"note": "test"}
        assert loaded.variant == model.variant
        za, _ = model_forward(model, operand, Xin)
        zb, _ = model_forward(loaded, operand, Xin)
        assert np.array_equal(za, zb)


class TestAdam:
    def test_quadratic_convergence(self):
        rng = np.random.default_rng(0)
        target = rng.standard_normal(5)
        x = np.zeros(5)
        opt = Adam([x], lr=0.1)
        for _ in range(2000):
            opt.step([x], [2 * (x - target)])
        assert np.abs(x - target).max() < 1e-6
