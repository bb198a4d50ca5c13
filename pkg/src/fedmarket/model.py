"""Small differentiable classifier shared by the agent and every seller.

Parameter layout (flat, row-major, float64):

* logistic regression, ``dims = (F, C, 0)``::

      W  (F x C) | b (C)

* one hidden tanh layer, ``dims = (F, C, H)``::

      W1 (F x H) | b1 (H) | W2 (H x C) | b2 (C)

A ``Gradient`` uses exactly the same layout as the ``ModelParams`` it
differentiates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MarketError

Dims = tuple[int, int, int]


def param_count(dims: Dims) -> int:
    features, classes, hidden = dims
    if hidden == 0:
        return features * classes + classes
    return features * hidden + hidden + hidden * classes + classes


def _check_vector(values: np.ndarray, dims: Dims) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.shape[0] != param_count(dims):
        raise MarketError("shape", f"expected {param_count(dims)} values for dims {dims}, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise MarketError("non-finite", "parameter vector contains NaN or Inf")
    return values


@dataclass(frozen=True, eq=False)
class ModelParams:
    values: np.ndarray
    dims: Dims

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "values", _check_vector(self.values, self.dims))

    @property
    def feature_count(self) -> int:
        return self.dims[0]

    @property
    def class_count(self) -> int:
        return self.dims[1]


@dataclass(frozen=True, eq=False)
class Gradient:
    values: np.ndarray
    dims: Dims

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "values", _check_vector(self.values, self.dims))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


def init_params(dims: Dims, seed: int | None = None, scale: float = 0.1) -> ModelParams:
    """Zeros for logistic regression; small Gaussian weights for the MLP.

    The hidden layer needs a random start, otherwise every hidden unit
    receives the same gradient and the layer never breaks symmetry.
    """
    if dims[2] == 0:
        return ModelParams(np.zeros(param_count(dims)), dims)
    rng = np.random.default_rng(seed)
    return ModelParams(rng.normal(0.0, scale, size=param_count(dims)), dims)


def _unpack(values: np.ndarray, dims: Dims):
    features, classes, hidden = dims
    if hidden == 0:
        w = values[: features * classes].reshape(features, classes)
        b = values[features * classes :]
        return w, b
    o = 0
    w1 = values[o : o + features * hidden].reshape(features, hidden)
    o += features * hidden
    b1 = values[o : o + hidden]
    o += hidden
    w2 = values[o : o + hidden * classes].reshape(hidden, classes)
    o += hidden * classes
    b2 = values[o : o + classes]
    return w1, b1, w2, b2


def _check_data(params: ModelParams, data) -> None:
    if len(data) == 0:
        raise MarketError("empty-dataset", "dataset has no rows")
    if data.features.shape[1] != params.feature_count or data.class_count != params.class_count:
        raise MarketError(
            "shape",
            f"data is ({data.features.shape[1]} features, {data.class_count} classes), "
            f"model is {params.dims}",
        )


def _logits(values: np.ndarray, dims: Dims, x: np.ndarray) -> np.ndarray:
    if dims[2] == 0:
        w, b = _unpack(values, dims)
        return x @ w + b
    w1, b1, w2, b2 = _unpack(values, dims)
    return np.tanh(x @ w1 + b1) @ w2 + b2


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def logits(params: ModelParams, features: np.ndarray) -> np.ndarray:
    return _logits(params.values, params.dims, np.asarray(features, dtype=np.float64))


def forward_loss(params: ModelParams, data) -> float:
    """Mean cross-entropy of ``params`` on ``data``."""
    _check_data(params, data)
    logp = _log_softmax(_logits(params.values, params.dims, data.features))
    return float(-logp[np.arange(len(data)), data.labels].mean())


def _gradient_values(values: np.ndarray, dims: Dims, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    classes = dims[1]
    onehot = np.zeros((n, classes))
    onehot[np.arange(n), y] = 1.0
    if dims[2] == 0:
        w, b = _unpack(values, dims)
        delta = (np.exp(_log_softmax(x @ w + b)) - onehot) / n
        return np.concatenate([(x.T @ delta).ravel(), delta.sum(axis=0)])
    w1, b1, w2, b2 = _unpack(values, dims)
    h = np.tanh(x @ w1 + b1)
    delta = (np.exp(_log_softmax(h @ w2 + b2)) - onehot) / n
    dh = (delta @ w2.T) * (1.0 - h * h)
    return np.concatenate([(x.T @ dh).ravel(), dh.sum(axis=0), (h.T @ delta).ravel(), delta.sum(axis=0)])


def gradient(params: ModelParams, data) -> Gradient:
    """Analytic gradient of :func:`forward_loss` with respect to the parameters."""
    _check_data(params, data)
    return Gradient(_gradient_values(params.values, params.dims, data.features, data.labels), params.dims)


def local_train(
    params: ModelParams,
    data,
    epochs: int = 5,
    lr: float = 0.1,
    seed: int | None = None,
    batch_size: int | None = None,
) -> tuple[ModelParams, Gradient]:
    """Run local gradient descent and return ``(trained, effective_gradient)``.

    Full-batch when ``batch_size`` is None. The effective gradient ``g``
    summarises the whole local phase; the returned parameters are rebuilt
    as ``params - lr * g`` so that identity holds bit for bit.
    """
    if not lr > 0:
        raise MarketError("bad-lr", f"learning rate must be > 0, got {lr}")
    if epochs < 1:
        raise MarketError("bad-epochs", f"epochs must be >= 1, got {epochs}")
    _check_data(params, data)

    w = params.values.copy()
    x, y = data.features, data.labels
    n = len(data)
    if batch_size is None or batch_size >= n:
        for _ in range(epochs):
            w -= lr * _gradient_values(w, params.dims, x, y)
    else:
        rng = np.random.default_rng(seed)
        for _ in range(epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                idx = order[start : start + batch_size]
                w -= lr * _gradient_values(w, params.dims, x[idx], y[idx])

    if not np.all(np.isfinite(w)):
        raise MarketError("non-finite", "local training diverged")
    g = (params.values - w) / lr
    return ModelParams(params.values - lr * g, params.dims), Gradient(g, params.dims)


def predict(params: ModelParams, features: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum: ties go to the lowest class index
    return np.argmax(logits(params, features), axis=1)


def accuracy(params: ModelParams, data) -> float:
    _check_data(params, data)
    return float(np.mean(predict(params, data.features) == data.labels))
