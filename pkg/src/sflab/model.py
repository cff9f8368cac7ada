"""Trainable models: the decoupled GNN variants and the one-layer filter
learner, with hand-rolled reverse-mode gradients and Adam.

Two variants share the trigonometric filter coefficients:

  medium: Z = conv(L, MLP(X))   (convolve the transformed features)
  large:  Z = MLP(conv(feats))  (transform pre-propagated features)

Only the MLP weights and the filter coefficients (alpha, beta) train;
the coefficient tables and the base frequency stay fixed.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .conv import PropagatedFeatures, precompute
from .errors import (
    DivergenceDetected,
    DimensionMismatch,
    NoForwardCache,
    VariantInputMismatch,
)
from .filters import design_matrix
from .graph import SparseMatrix, spmv
from .trig import TaylorTables, TrigParams, effective_coefficients, taylor_tables

PAPER_K_GRID = (2, 4, 6, 8, 10, 15, 20)
PAPER_OMEGA_GRID = (0.2 * np.pi, 0.3 * np.pi, 0.5 * np.pi, 0.7 * np.pi)


@dataclass
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    max_epochs: int = 1000
    patience: int = 200
    seed: int = 0
    k_grid: tuple = PAPER_K_GRID
    omega_grid: tuple = PAPER_OMEGA_GRID
    D: int = 10
    hidden: tuple = (64,)
    filter_weight_decay: bool = False  # alpha/beta are exempt by default
    loss: str = "cross_entropy"


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------


class Mlp:
    """Affine -> ReLU -> dropout stack; the last layer is affine only."""

    def __init__(self, dims, dropout=0.0, rng=None):
        """dims = (in, hidden..., out); dropout is one rate for every
        non-final layer (or a sequence of per-layer rates)."""
        if rng is None:
            rng = np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        n_hidden = len(dims) - 2
        if np.isscalar(dropout):
            self.dropout = tuple([float(dropout)] * n_hidden)
        else:
            self.dropout = tuple(float(p) for p in dropout)
            if len(self.dropout) != n_hidden:
                raise DimensionMismatch("one dropout rate per hidden layer")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def mlp_forward(mlp: Mlp, X: np.ndarray, train_mode: bool = False, rng=None):
    """Returns (output, cache); dropout masks are drawn from ``rng`` only in
    train mode, so evaluation passes are deterministic."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != mlp.weights[0].shape[0]:
        raise DimensionMismatch(
            f"features have width {X.shape[1]}, MLP expects {mlp.weights[0].shape[0]}"
        )
    h = X
    cache = []
    last = mlp.n_layers - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = h @ w + b
        if i < last:
            a = np.maximum(z, 0.0)
            mask = None
            p = mlp.dropout[i]
            if train_mode and p > 0.0:
                if rng is None:
                    rng = np.random.default_rng(0)
                mask = (rng.random(a.shape) >= p) / (1.0 - p)
                a = a * mask
            cache.append((h, z, mask))
            h = a
        else:
            cache.append((h, z, None))
            h = z
    return h, cache


def mlp_backward(mlp: Mlp, cache, d_out: np.ndarray):
    """Gradients for every weight/bias plus the input gradient."""
    if cache is None:
        raise NoForwardCache("run mlp_forward first")
    grads_w = [None] * mlp.n_layers
    grads_b = [None] * mlp.n_layers
    g = np.asarray(d_out, dtype=np.float64)
    last = mlp.n_layers - 1
    for i in range(last, -1, -1):
        h, z, mask = cache[i]
        if i < last:
            if mask is not None:
                g = g * mask
            g = g * (z > 0.0)
        grads_w[i] = h.T @ g
        grads_b[i] = g.sum(axis=0)
        g = g @ mlp.weights[i].T
    return grads_w, grads_b, g


# ---------------------------------------------------------------------------
# TFGNN model
# ---------------------------------------------------------------------------


class TfgnnModel:
    """Decoupled model: ``variant`` is "medium" (convolve after the MLP) or
    "large" (MLP on precomputed propagated features)."""

    def __init__(self, variant: str, mlp: Mlp, trig: TrigParams,
                 tables: TaylorTables):
        if variant not in ("medium", "large"):
            raise VariantInputMismatch(f"unknown variant {variant!r}")
        if tables.K != trig.K or tables.omega != trig.omega:
            raise DimensionMismatch("tables do not match the filter parameters")
        self.variant = variant
        self.mlp = mlp
        self.trig = trig
        self.tables = tables

    @classmethod
    def build(cls, variant, in_dim, out_dim, hidden=(64,), dropout=0.5,
              K=4, omega=0.2 * np.pi, D=10, seed=0):
        """Fan-in uniform MLP init; the filter starts at identity (beta_0 = 1)
        so early training is well conditioned."""
        rng = np.random.default_rng(seed)
        mlp = Mlp((in_dim, *hidden, out_dim), dropout=dropout, rng=rng)
        trig = TrigParams.identity(K, omega)
        return cls(variant, mlp, trig, taylor_tables(K, omega, D))

    @property
    def n_conv_params(self) -> int:
        return 2 * (self.trig.K + 1)

    def coefficients(self) -> np.ndarray:
        return effective_coefficients(self.trig, self.tables)

    def parameters(self):
        return self.mlp.parameters() + [self.trig.alpha, self.trig.beta]

    def set_filter(self, alpha, beta):
        self.trig = TrigParams(self.trig.K, self.trig.omega,
                               np.asarray(alpha, dtype=np.float64),
                               np.asarray(beta, dtype=np.float64))

    def snapshot(self):
        return copy.deepcopy(
            {"w": self.mlp.weights, "b": self.mlp.biases,
             "alpha": self.trig.alpha, "beta": self.trig.beta}
        )

    def restore(self, snap):
        self.mlp.weights = copy.deepcopy(snap["w"])
        self.mlp.biases = copy.deepcopy(snap["b"])
        self.set_filter(snap["alpha"], snap["beta"])


def model_forward(model: TfgnnModel, operand, X=None, train_mode=False, rng=None):
    """Run the variant-appropriate forward pass.

    medium: ``operand`` is the Laplacian (SparseMatrix), ``X`` the features.
    large: ``operand`` is PropagatedFeatures; ``X`` must be None.
    Returns (logits, cache) where the cache feeds ``model_backward``.
    """
    c = model.coefficients()
    if model.variant == "medium":
        if not isinstance(operand, SparseMatrix):
            raise VariantInputMismatch("medium variant needs the Laplacian")
        if X is None:
            raise VariantInputMismatch("medium variant needs features")
        h, mlp_cache = mlp_forward(model.mlp, X, train_mode, rng)
        blocks = precompute(operand, h, model.tables.D).blocks
        z = c[0] * blocks[0]
        for d in range(1, model.tables.D + 1):
            z = z + c[d] * blocks[d]
        return z, {"variant": "medium", "mlp": mlp_cache, "blocks": blocks,
                   "L": operand}
    if not isinstance(operand, PropagatedFeatures):
        raise VariantInputMismatch("large variant needs precomputed features")
    if X is not None:
        raise VariantInputMismatch("large variant takes features from the store")
    if operand.D < model.tables.D:
        raise VariantInputMismatch(
            f"store holds degree {operand.D}, model needs {model.tables.D}"
        )
    hc = c[0] * operand.blocks[0]
    for d in range(1, model.tables.D + 1):
        hc = hc + c[d] * operand.blocks[d]
    z, mlp_cache = mlp_forward(model.mlp, hc, train_mode, rng)
    return z, {"variant": "large", "mlp": mlp_cache, "feats": operand}


@dataclass
class Grads:
    mlp_w: list
    mlp_b: list
    alpha: np.ndarray
    beta: np.ndarray

    def as_list(self):
        out = []
        for w, b in zip(self.mlp_w, self.mlp_b):
            out.append(w)
            out.append(b)
        return out + [self.alpha, self.beta]


def model_backward(model: TfgnnModel, cache, d_logits: np.ndarray) -> Grads:
    """Exact reverse-mode gradients for the MLP and the filter coefficients.

    The convolution backward exploits symmetry of L: the adjoint of
    sum_d c_d L^d is itself, so the incoming gradient is propagated by the
    same running-power sweep. Coefficient gradients contract each propagated
    block with the output gradient, then map through the fixed tables.
    """
    if cache is None:
        raise NoForwardCache("run model_forward first")
    g = np.asarray(d_logits, dtype=np.float64)
    D = model.tables.D
    c = model.coefficients()
    if cache["variant"] == "medium":
        blocks = cache["blocks"]
        dc = np.array([float(np.sum(blocks[d] * g)) for d in range(D + 1)])
        p = g
        dh = c[0] * p
        for d in range(1, D + 1):
            p = spmv(cache["L"], p)
            dh = dh + c[d] * p
        gw, gb, _ = mlp_backward(model.mlp, cache["mlp"], dh)
    else:
        gw, gb, dhc = mlp_backward(model.mlp, cache["mlp"], g)
        blocks = cache["feats"].blocks
        dc = np.array([float(np.sum(blocks[d] * dhc)) for d in range(D + 1)])
    d_alpha = model.tables.Gamma @ dc
    d_beta = model.tables.Theta @ dc
    return Grads(mlp_w=gw, mlp_b=gb, alpha=d_alpha, beta=d_beta)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def softmax_cross_entropy(logits, labels, mask):
    """Masked mean cross entropy; returns (loss, d_logits)."""
    logits = np.asarray(logits, dtype=np.float64)
    idx = np.nonzero(mask)[0]
    sub = logits[idx]
    shifted = sub - sub.max(axis=1, keepdims=True)
    expv = np.exp(shifted)
    p = expv / expv.sum(axis=1, keepdims=True)
    ll = shifted[np.arange(len(idx)), labels[idx]] - np.log(
        expv.sum(axis=1)
    )
    loss = float(-ll.mean())
    d = np.zeros_like(logits)
    d_sub = p.copy()
    d_sub[np.arange(len(idx)), labels[idx]] -= 1.0
    d[idx] = d_sub / len(idx)
    return loss, d


def mse_loss(pred, target, mask=None):
    """Mean squared error (over masked rows if a mask is given)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if mask is not None:
        idx = np.nonzero(mask)[0]
        diff = pred[idx] - target[idx]
        denom = diff.size
        loss = float(np.sum(diff * diff) / denom)
        d = np.zeros_like(pred)
        d[idx] = 2.0 * diff / denom
        return loss, d
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


def accuracy(logits, labels, mask) -> float:
    idx = np.nonzero(mask)[0]
    if len(idx) == 0:
        return 0.0
    pred = np.argmax(logits[idx], axis=1)
    return float(np.mean(pred == labels[idx]))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    best_val: float
    best_epoch: int
    test_metric: float | None
    history: list
    model: TfgnnModel


def train(model: TfgnnModel, data, operand, config: TrainConfig) -> TrainResult:
    """Full-batch Adam with early stopping on the validation metric.

    Classification stops on validation accuracy, regression on validation
    MSE; the returned model carries the best-validation snapshot.
    """
    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    opt = Adam(params, lr=config.lr)
    n_mlp = 2 * model.mlp.n_layers

    classify = config.loss == "cross_entropy"
    best_val = -np.inf if classify else np.inf
    best_snap = model.snapshot()
    best_epoch = -1
    history = []
    X = data.features if model.variant == "medium" else None

    for epoch in range(config.max_epochs):
        logits, cache = model_forward(model, operand, X, train_mode=True, rng=rng)
        if classify:
            loss, dlogits = softmax_cross_entropy(
                logits, data.labels, data.masks["train"]
            )
        else:
            loss, dlogits = mse_loss(logits, data.targets, data.masks["train"])
        if not np.isfinite(loss):
            raise DivergenceDetected(
                f"non-finite loss at epoch {epoch}; "
                f"param norms {[float(np.linalg.norm(p)) for p in params]}"
            )
        grads = model_backward(model, cache, dlogits).as_list()
        if config.weight_decay:
            for i in range(n_mlp):
                grads[i] = grads[i] + config.weight_decay * params[i]
            if config.filter_weight_decay:
                for i in (n_mlp, n_mlp + 1):
                    grads[i] = grads[i] + config.weight_decay * params[i]
        opt.step(params, grads)

        eval_logits, _ = model_forward(model, operand, X, train_mode=False)
        if classify:
            val = accuracy(eval_logits, data.labels, data.masks["val"])
            improved = val > best_val
        else:
            val, _ = mse_loss(eval_logits, data.targets, data.masks["val"])
            improved = val < best_val
        history.append({"epoch": epoch, "train_loss": loss, "val": val})
        if improved:
            best_val = val
            best_epoch = epoch
            best_snap = model.snapshot()
        elif epoch - best_epoch >= config.patience:
            break

    model.restore(best_snap)
    test = None
    if "test" in data.masks and data.masks["test"].any():
        logits, _ = model_forward(model, operand, X, train_mode=False)
        if classify:
            test = accuracy(logits, data.labels, data.masks["test"])
        else:
            test, _ = mse_loss(logits, data.targets, data.masks["test"])
    return TrainResult(best_val=float(best_val), best_epoch=best_epoch,
                       test_metric=test, history=history, model=model)


# ---------------------------------------------------------------------------
# One-layer linear filter learning
# ---------------------------------------------------------------------------


@dataclass
class FilterLearnResult:
    basis: str
    metric: float
    coefficients: np.ndarray
    fit_values: np.ndarray
    history: list
    final_loss: float = float("nan")


def basis_blocks(L: SparseMatrix, X: np.ndarray, basis: str, D: int) -> list:
    """Propagated blocks B_d so that the filter output is sum_d theta_d B_d."""
    X = np.asarray(X, dtype=np.float64)
    if basis in ("monomial", "trig_tpd"):
        return list(precompute(L, X, D).blocks)
    if basis == "chebyshev":
        # T_d(L - I) X by the three-term recurrence
        blocks = [X, spmv(L, X) - X]
        for _ in range(D - 1):
            nxt = 2.0 * (spmv(L, blocks[-1]) - blocks[-1]) - blocks[-2]
            blocks.append(nxt)
        return blocks[: D + 1]
    if basis == "bernstein":
        import math as _math

        # S_j = (I - L/2)^j X, then apply (L/2)^d to S_{D-d}
        s = [X]
        for _ in range(D):
            s.append(s[-1] - 0.5 * spmv(L, s[-1]))
        blocks = []
        for d in range(D + 1):
            b = s[D - d]
            for _ in range(d):
                b = 0.5 * spmv(L, b)
            blocks.append(_math.comb(D, d) * b)
        return blocks
    raise DimensionMismatch(f"unknown basis {basis!r}")


def filter_learning_model(
    eig,
    L: SparseMatrix,
    X: np.ndarray,
    Y: np.ndarray,
    filt,
    basis: str,
    D: int,
    trig: tuple[int, float] | None = None,
    lr: float = 0.05,
    epochs: int = 2000,
    seed: int = 0,
    blocks: list | None = None,
) -> FilterLearnResult:
    """Gradient-train just the filter coefficients of a one-layer linear
    model (no weight matrix) on (X, Y); the reported metric is the l2 norm
    of the learned-minus-target filter over the eigenvalue multiset.

    The learning rate follows a cosine anneal to zero; without it Adam
    orbits the optimum at a radius set by the fixed step size and the
    coefficients never settle.
    """
    if blocks is None:
        blocks = basis_blocks(L, X, basis, D)
    B = np.stack(blocks)  # (D+1, n, m)
    lam = eig.eigenvalues

    # every basis starts at the identity (constant-1) filter
    if basis == "trig_tpd":
        if trig is None:
            trig = (D, 0.5 * np.pi)
        K, omega = trig
        tables = taylor_tables(K, omega, D)
        alpha = np.zeros(K + 1)
        beta = np.zeros(K + 1)
        beta[0] = 1.0
        params = [alpha, beta]
    else:
        tables = None
        if basis == "bernstein":
            theta = np.ones(D + 1)  # partition of unity
        else:
            theta = np.zeros(D + 1)
            theta[0] = 1.0
        params = [theta]

    opt = Adam(params, lr=lr)
    denom = Y.size
    history = []
    for epoch in range(epochs):
        opt.lr = lr * 0.5 * (1.0 + np.cos(np.pi * epoch / max(epochs, 1)))
        if tables is not None:
            c = tables.Gamma.T @ params[0] + tables.Theta.T @ params[1]
        else:
            c = params[0]
        Z = np.tensordot(c, B, axes=1)
        diff = Z - Y
        loss = float(np.sum(diff * diff) / denom)
        if not np.isfinite(loss):
            raise DivergenceDetected(f"filter learning diverged at epoch {epoch}")
        dc = np.tensordot(B, 2.0 * diff / denom, axes=([1, 2], [0, 1]))
        if tables is not None:
            opt.step(params, [tables.Gamma @ dc, tables.Theta @ dc])
        else:
            opt.step(params, [dc])
        if epoch % 50 == 0 or epoch == epochs - 1:
            history.append({"epoch": epoch, "loss": loss})

    if tables is not None:
        c = tables.Gamma.T @ params[0] + tables.Theta.T @ params[1]
        fit_values = np.polynomial.polynomial.polyval(lam, c)
        coefficients = c
    else:
        coefficients = params[0]
        fit_values = design_matrix(basis, D, lam) @ coefficients
    target_values = np.asarray(filt(lam), dtype=np.float64)
    metric = float(np.linalg.norm(fit_values - target_values))
    return FilterLearnResult(basis=basis, metric=metric,
                             coefficients=coefficients,
                             fit_values=fit_values, history=history,
                             final_loss=loss)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_CKPT_VERSION = 1


def save_checkpoint(model: TfgnnModel, path, config: dict | None = None) -> None:
    arrays = {
        "version": np.int64(_CKPT_VERSION),
        "variant": np.bytes_(model.variant.encode()),
        "K": np.int64(model.trig.K),
        "omega": np.float64(model.trig.omega),
        "D": np.int64(model.tables.D),
        "alpha": model.trig.alpha,
        "beta": model.trig.beta,
        "n_layers": np.int64(model.mlp.n_layers),
        "dropout": np.asarray(model.mlp.dropout, dtype=np.float64),
        "config_json": np.bytes_(json.dumps(config or {}, sort_keys=True).encode()),
    }
    for i, (w, b) in enumerate(zip(model.mlp.weights, model.mlp.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[TfgnnModel, dict]:
    from .errors import FormatError

    try:
        zfile = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise FormatError(f"unreadable checkpoint {path}: {exc}") from exc
    with zfile as z:
        try:
            version = int(z["version"])
        except KeyError as exc:
            raise FormatError(f"{path}: not a model checkpoint") from exc
        if version != _CKPT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        variant = bytes(z["variant"]).decode()
        K = int(z["K"])
        omega = float(z["omega"])
        D = int(z["D"])
        n_layers = int(z["n_layers"])
        dims = [z["w0"].shape[0]] + [z[f"w{i}"].shape[1] for i in range(n_layers)]
        mlp = Mlp(dims, dropout=tuple(float(p) for p in z["dropout"]))
        for i in range(n_layers):
            mlp.weights[i] = z[f"w{i}"].copy()
            mlp.biases[i] = z[f"b{i}"].copy()
        trig = TrigParams(K, omega, z["alpha"].copy(), z["beta"].copy())
        config = json.loads(bytes(z["config_json"]).decode())
    return TfgnnModel(variant, mlp, trig, taylor_tables(K, omega, D)), config
