"""Small differentiable classifiers with exact cross-entropy gradients.

Two architectures only: a linear softmax classifier (convex instance, sharp
constant estimates) and a one-hidden-layer tanh network (the smooth
non-convex instance). The cross-entropy loss is written as the inner product
of the label with the negative-log-softmax vector p, so its gradient in the
parameters is linear in the label; several estimators downstream rely on
exactly that structure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LabeledSet, as_vec, check_finite, softmax, softmax_rows


@dataclass(frozen=True)
class SoftmaxLinear:
    """Scores f(x; w) = W x with W of shape (k, d), parameters flattened row-major."""

    d: int
    k: int

    def __post_init__(self):
        if self.d < 1 or self.k < 2:
            raise ValueError("SoftmaxLinear needs d >= 1 and k >= 2")

    @property
    def param_count(self) -> int:
        return self.k * self.d


@dataclass(frozen=True)
class Mlp:
    """One tanh hidden layer: f(x; w) = W2 tanh(W1 x + b1) + b2.

    Parameter layout: [W1 (hidden*d), b1 (hidden), W2 (k*hidden), b2 (k)].
    tanh keeps the map smooth, which the smoothness estimates require.
    """

    d: int
    hidden: int
    k: int

    def __post_init__(self):
        if self.d < 1 or self.hidden < 1 or self.k < 2:
            raise ValueError("Mlp needs d >= 1, hidden >= 1, k >= 2")

    @property
    def param_count(self) -> int:
        return self.hidden * self.d + self.hidden + self.k * self.hidden + self.k

    def unpack(self, w: np.ndarray):
        h, d, k = self.hidden, self.d, self.k
        i = 0
        w1 = w[i:i + h * d].reshape(h, d); i += h * d
        b1 = w[i:i + h]; i += h
        w2 = w[i:i + k * h].reshape(k, h); i += k * h
        b2 = w[i:i + k]
        return w1, b1, w2, b2


Arch = SoftmaxLinear | Mlp


@dataclass(frozen=True)
class Predictor:
    """An architecture plus one flat parameter vector."""

    arch: Arch
    params: np.ndarray

    def __post_init__(self):
        w = as_vec(self.params, size=self.arch.param_count, name="params")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "params", w)

    def with_params(self, w: np.ndarray) -> "Predictor":
        return Predictor(self.arch, w)


@dataclass(frozen=True)
class GradSample:
    loss: float
    grad: np.ndarray


def zeros_predictor(arch: Arch) -> Predictor:
    return Predictor(arch, np.zeros(arch.param_count))


def init_predictor(arch: Arch, rng, scale: float = 0.1) -> Predictor:
    """Gaussian init; needed for the Mlp, whose all-zero point is a dead saddle."""
    return Predictor(arch, scale * rng.gen.standard_normal(arch.param_count))


def batch_scores(model: Predictor, x: np.ndarray) -> np.ndarray:
    """Scores for an (n, d) batch; returns (n, k)."""
    arch = model.arch
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != arch.d:
        raise ValueError(f"batch must have shape (n, {arch.d})")
    if isinstance(arch, SoftmaxLinear):
        w = model.params.reshape(arch.k, arch.d)
        return x @ w.T
    w1, b1, w2, b2 = arch.unpack(model.params)
    h = np.tanh(x @ w1.T + b1)
    return h @ w2.T + b2


def forward(model: Predictor, x) -> np.ndarray:
    """Score vector f(x; w) for a single input."""
    xv = as_vec(x, size=model.arch.d, name="x")
    return batch_scores(model, xv[None, :])[0]


def p_from_scores(scores) -> np.ndarray:
    """Negative log-softmax of a score vector: p_i = logsumexp(s) - s_i."""
    s = as_vec(scores, name="scores")
    if s.shape[0] < 2:
        raise ValueError("need at least 2 classes")
    m = np.max(s)
    lse = m + np.log(np.sum(np.exp(s - m)))
    return lse - s


def p_rows(scores: np.ndarray) -> np.ndarray:
    """Row-wise negative log-softmax of an (n, k) score matrix."""
    s = np.asarray(scores, dtype=np.float64)
    m = np.max(s, axis=1, keepdims=True)
    lse = m + np.log(np.sum(np.exp(s - m), axis=1, keepdims=True))
    return lse - s


def p_of(model: Predictor, x) -> np.ndarray:
    return p_from_scores(forward(model, x))


def _check_simplex_label(y: np.ndarray) -> None:
    # ce_loss accepts labels on the simplex within 1e-6; anything further off
    # is a caller bug rather than rounding.
    if abs(float(np.sum(y)) - 1.0) > 1e-6 or float(np.min(y)) < -1e-6:
        raise ValueError("label must lie on the probability simplex (tolerance 1e-6)")


def ce_loss(y, scores) -> float:
    """Cross entropy <y, p(scores)> for a simplex label y."""
    p = p_from_scores(scores)
    yv = as_vec(y, size=p.shape[0], name="y")
    _check_simplex_label(yv)
    return float(yv @ p)


def ce_values(model: Predictor, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-example cross-entropy values for a batch; no simplex check (hot path)."""
    p = p_rows(batch_scores(model, x))
    return np.sum(np.asarray(y, dtype=np.float64) * p, axis=1)


def label_grad(model: Predictor, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Mean over the batch of the parameter gradient of <z_i, p(x_i; w)>.

    Valid for arbitrary label rows z, on or off the simplex: the score-space
    gradient of <z, p(s)> is (sum z) * softmax(s) - z. Both the plain CE path
    and the corrected-loss path go through here so that their arithmetic is
    identical when they coincide.
    """
    arch = model.arch
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    s = batch_scores(model, x)
    sig = softmax_rows(s)
    ds = (z.sum(axis=1, keepdims=True) * sig - z) / n
    if isinstance(arch, SoftmaxLinear):
        return (ds.T @ x).ravel()
    w1, b1, w2, b2 = arch.unpack(model.params)
    h = np.tanh(x @ w1.T + b1)
    dw2 = ds.T @ h
    db2 = ds.sum(axis=0)
    dh = ds @ w2
    da = (1.0 - h * h) * dh
    dw1 = da.T @ x
    db1 = da.sum(axis=0)
    return np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2])


def ce_grad(model: Predictor, x, y) -> GradSample:
    """Loss and exact parameter gradient of the cross entropy at one example.

    The label may be any finite vector, not just a simplex point: the gradient
    <y, grad p> is linear in y, and the corrected-loss envelope evaluates it at
    ball minimizers that sit strictly off the simplex.
    """
    xv = as_vec(x, size=model.arch.d, name="x")
    yv = as_vec(y, name="y")
    scores = forward(model, xv)
    loss = float(yv @ p_from_scores(scores))
    grad = label_grad(model, xv[None, :], yv[None, :])
    return GradSample(loss=loss, grad=check_finite(grad, "grad"))


def mean_ce_grad(model: Predictor, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Mean CE gradient over a batch (hot path, no simplex check)."""
    return label_grad(model, x, y)


def score_jacobian(model: Predictor, x) -> np.ndarray:
    """Jacobian of the score vector in the flat parameters, shape (k, D)."""
    arch = model.arch
    xv = as_vec(x, size=arch.d, name="x")
    if isinstance(arch, SoftmaxLinear):
        return np.kron(np.eye(arch.k), xv)
    w1, b1, w2, b2 = arch.unpack(model.params)
    h = np.tanh(w1 @ xv + b1)
    dtanh = 1.0 - h * h
    k, hid, d = arch.k, arch.hidden, arch.d
    jac = np.zeros((k, arch.param_count))
    # ds_i/dW2 puts h into row i; ds_i/db2 = e_i; hidden path through tanh'.
    for i in range(k):
        da = dtanh * w2[i]
        jac[i, :hid * d] = np.outer(da, xv).ravel()
        jac[i, hid * d:hid * d + hid] = da
        jac[i, hid * d + hid + i * hid:hid * d + hid + (i + 1) * hid] = h
        jac[i, hid * d + hid + k * hid + i] = 1.0
    return jac


def p_jacobian(model: Predictor, x) -> np.ndarray:
    """Jacobian of p(x; w) in the flat parameters, shape (k, D)."""
    scores = forward(model, x)
    sig = softmax(scores)
    j = score_jacobian(model, x)
    return (np.outer(np.ones(len(sig)), sig) - np.eye(len(sig))) @ j


def estimate_G(model: Predictor, dataset: LabeledSet, params_cloud) -> float:
    """Largest spectral norm of the p-Jacobian over (input, parameter) pairs.

    An empirical stand-in for the uniform gradient bound: the max never
    decreases as points are added. Reported over visited parameters only.
    """
    cloud = list(params_cloud)
    if dataset.n == 0 or len(cloud) == 0:
        raise ValueError("need a nonempty dataset and parameter cloud")
    best = 0.0
    for w in cloud:
        m = model.with_params(np.asarray(w, dtype=np.float64))
        for i in range(dataset.n):
            jac = p_jacobian(m, dataset.inputs[i])
            best = max(best, float(np.linalg.norm(jac, 2)))
    return best
