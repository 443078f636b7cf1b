"""Small dense feed-forward network with exact reverse-mode gradients.

Parameters live in a single flat float64 vector (weights row-major, then
biases, layer by layer).  The output layer is always a single linear unit
producing a logit for binary cross-entropy with logits.  All arithmetic is
64-bit; forward/backward are pure functions of (spec, params, data).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "softplus")


class ShapeError(ValueError):
    """Input dimensions inconsistent with a NetworkSpec."""


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form is stable for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of the classifier: input width, hidden widths, activation."""

    input_dim: int
    hidden_dims: tuple[int, ...] = ()
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ValueError("all layer dims must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, 1)

    @property
    def param_count(self) -> int:
        d = self.dims
        return sum(d[i - 1] * d[i] + d[i] for i in range(1, len(d)))

    def unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views (W, b) per layer into the flat vector; W has shape (out, in)."""
        if params.ndim != 1 or params.shape[0] != self.param_count:
            raise ShapeError(
                f"expected flat parameter vector of length {self.param_count}, "
                f"got shape {params.shape}"
            )
        layers = []
        d = self.dims
        off = 0
        for i in range(1, len(d)):
            nin, nout = d[i - 1], d[i]
            W = params[off : off + nin * nout].reshape(nout, nin)
            off += nin * nout
            b = params[off : off + nout]
            off += nout
            layers.append((W, b))
        return layers

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        """Glorot-uniform weights, zero biases."""
        params = np.zeros(self.param_count)
        for W, _ in self.unpack(params):
            nout, nin = W.shape
            bound = np.sqrt(6.0 / (nin + nout))
            W[...] = rng.uniform(-bound, bound, size=W.shape)
        return params


@dataclass
class ForwardTape:
    """Per-layer pre-activations/activations of one batch; single backward use."""

    X: np.ndarray
    zs: list[np.ndarray]
    activations: list[np.ndarray]  # a_0 .. a_{L-1} (inputs to each layer)
    params: np.ndarray = field(repr=False)
    consumed: bool = False


def forward(spec: NetworkSpec, params: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, ForwardTape]:
    """Logits of the batch X (rows are samples) plus the tape for backward."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ShapeError(f"X must be (batch, {spec.input_dim}), got {X.shape}")
    layers = spec.unpack(np.asarray(params, dtype=np.float64))
    a = X
    zs, acts = [], [a]
    for li, (W, b) in enumerate(layers):
        z = a @ W.T + b
        zs.append(z)
        if li < len(layers) - 1:
            if spec.activation == "relu":
                a = np.maximum(z, 0.0)
            else:
                a = np.logaddexp(0.0, z)
            acts.append(a)
    logits = zs[-1][:, 0]
    return logits, ForwardTape(X=X, zs=zs, activations=acts, params=params)


def bce_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy with logits: softplus(z) - y*z averaged."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if logits.shape != labels.shape:
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} differ")
    if logits.size == 0:
        raise ValueError("bce_loss of an empty batch is undefined")
    return float(np.mean(np.logaddexp(0.0, logits) - labels * logits))


def backward(spec: NetworkSpec, params: np.ndarray, tape: ForwardTape,
             labels: np.ndarray) -> np.ndarray:
    """Gradient of mean BCE over the tape's batch w.r.t. the flat parameters.

    ReLU subderivative at 0 is taken as 0.  The tape is consumed: a second
    backward on the same tape raises.
    """
    if tape.consumed:
        raise ValueError("ForwardTape already consumed by a backward pass")
    if tape.params is not params and not np.array_equal(tape.params, params):
        raise ValueError("tape was produced by forward on different parameters")
    tape.consumed = True
    labels = np.asarray(labels, dtype=np.float64)
    B = tape.X.shape[0]
    if labels.shape != (B,):
        raise ShapeError(f"labels must be ({B},), got {labels.shape}")

    layers = spec.unpack(np.asarray(params, dtype=np.float64))
    grad = np.zeros(spec.param_count)
    glayers = spec.unpack(grad)

    z_out = tape.zs[-1][:, 0]
    delta = ((_sigmoid(z_out) - labels) / B)[:, None]
    for li in range(len(layers) - 1, -1, -1):
        W, _ = layers[li]
        gW, gb = glayers[li]
        a_prev = tape.activations[li]
        gW[...] = delta.T @ a_prev
        gb[...] = delta.sum(axis=0)
        if li > 0:
            da = delta @ W
            z_prev = tape.zs[li - 1]
            if spec.activation == "relu":
                delta = da * (z_prev > 0.0)
            else:
                delta = da * _sigmoid(z_prev)
    return grad


def loss_and_grad(spec: NetworkSpec, params: np.ndarray, X: np.ndarray,
                  labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Convenience: mean BCE over (X, labels) and its parameter gradient."""
    logits, tape = forward(spec, params, X)
    return bce_loss(logits, labels), backward(spec, params, tape, labels)


def predict_scores(spec: NetworkSpec, params: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Sigmoid outputs in [0, 1] for the batch."""
    logits, _ = forward(spec, params, X)
    return _sigmoid(logits)
