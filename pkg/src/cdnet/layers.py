"""Layer kernels with explicit forward caches and hand-written backward passes.

All kernels take a batch as the leading axis.  Forward functions return
``(output, cache)``; backward functions consume that cache plus the upstream
gradient and return parameter gradients followed by the input gradient.
"""

from dataclasses import dataclass

import numpy as np

from .spectral import fft, ifft, materialize_circulant, reverse_coeffs

__all__ = [
    "NonFiniteError",
    "CirculantStack",
    "DenseParams",
    "LayerSpec",
    "ForwardCache",
    "cdlinear_forward",
    "cdlinear_backward",
    "cdlinear_weight_matrix",
    "dense_forward",
    "dense_backward",
    "relu_forward",
    "relu_backward",
    "mse_loss",
    "softmax_cross_entropy",
    "slice_logits",
    "slice_logits_backward",
    "init_cdlinear",
    "init_dense",
]


class NonFiniteError(ValueError):
    """A layer received NaN or infinite values."""


@dataclass
class CirculantStack:
    """First rows ``coeffs[i, j]`` of a ``K_o x K_i`` grid of circulant blocks."""

    coeffs: np.ndarray  # (K_o, K_i, B)
    bias: np.ndarray  # (K_o * B,)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.coeffs.ndim != 3:
            raise ValueError(f"coeffs must be (K_o, K_i, B), got {self.coeffs.shape}")
        if self.bias.shape != (self.n_out,):
            raise ValueError(f"bias must have shape ({self.n_out},), got {self.bias.shape}")

    @property
    def block_size(self):
        return self.coeffs.shape[2]

    @property
    def n_in(self):
        return self.coeffs.shape[1] * self.coeffs.shape[2]

    @property
    def n_out(self):
        return self.coeffs.shape[0] * self.coeffs.shape[2]

    @property
    def num_params(self):
        return self.coeffs.size + self.bias.size


@dataclass
class DenseParams:
    weight: np.ndarray  # (n_out, n_in)
    bias: np.ndarray  # (n_out,)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError(
                f"incompatible dense shapes: weight {self.weight.shape}, bias {self.bias.shape}"
            )

    @property
    def n_in(self):
        return self.weight.shape[1]

    @property
    def n_out(self):
        return self.weight.shape[0]

    @property
    def num_params(self):
        return self.weight.size + self.bias.size


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "dense" | "cdlinear" | "relu"
    n_in: int
    n_out: int
    block_size: int = 1

    def __post_init__(self):
        if self.kind not in ("dense", "cdlinear", "relu"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.n_in < 1 or self.n_out < 1:
            raise ValueError("layer dimensions must be positive")
        if self.kind == "relu" and self.n_in != self.n_out:
            raise ValueError("relu must preserve dimension")
        if self.kind == "cdlinear":
            b = self.block_size
            if b < 1 or self.n_in % b or self.n_out % b:
                raise ValueError(
                    f"block size {b} must divide n_in={self.n_in} and n_out={self.n_out}"
                )

    @property
    def num_params(self):
        if self.kind == "dense":
            return self.n_in * self.n_out + self.n_out
        if self.kind == "cdlinear":
            return self.n_in * self.n_out // self.block_size + self.n_out
        return 0


@dataclass
class ForwardCache:
    """Saved tensors from one forward call; ``x`` is the layer input."""

    x: np.ndarray
    x_hat: np.ndarray = None  # per-block spectrum of x, cdlinear only


def _check_batch(x, n, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != n:
        raise ValueError(f"{name} must have shape (batch, {n}), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return x


def cdlinear_forward(params, x):
    """Block-circulant affine map, one FFT per (sample, input block)."""
    x = _check_batch(x, params.n_in)
    k_o, k_i, b = params.coeffs.shape
    x_hat = fft(x.reshape(-1, k_i, b))  # (N, K_i, B)
    c_hat = fft(params.coeffs)  # (K_o, K_i, B)
    y_hat = np.einsum("ojb,njb->nob", c_hat, x_hat)
    y = ifft(y_hat).real.reshape(-1, k_o * b) + params.bias
    return y, ForwardCache(x=x, x_hat=x_hat)


def cdlinear_backward(params, cache, dy):
    """Returns ``(grad_coeffs, grad_bias, dx)``.

    The weight gradient is the circular cross-correlation of each input block
    with the matching upstream block; the input gradient convolves the
    upstream blocks with the reversed coefficient rows.
    """
    k_o, k_i, b = params.coeffs.shape
    dy = _check_batch(dy, params.n_out, "dy")
    if dy.shape[0] != cache.x.shape[0]:
        raise ValueError("dy batch size does not match cached input")
    dy_hat = fft(dy.reshape(-1, k_o, b))  # (N, K_o, B)
    grad_hat = np.einsum("njb,nob->ojb", np.conj(cache.x_hat), dy_hat)
    grad_coeffs = ifft(grad_hat).real
    rev_hat = fft(reverse_coeffs(params.coeffs))
    dx = ifft(np.einsum("ojb,nob->njb", rev_hat, dy_hat)).real.reshape(-1, k_i * b)
    return grad_coeffs, dy.sum(axis=0), dx


def cdlinear_weight_matrix(params):
    """Materialise the full ``n_out x n_in`` weight matrix (testing utility)."""
    k_o, k_i, b = params.coeffs.shape
    w = np.zeros((k_o * b, k_i * b))
    for i in range(k_o):
        for j in range(k_i):
            w[i * b:(i + 1) * b, j * b:(j + 1) * b] = materialize_circulant(params.coeffs[i, j])
    return w


def dense_forward(params, x):
    x = _check_batch(x, params.n_in)
    return x @ params.weight.T + params.bias, ForwardCache(x=x)


def dense_backward(params, cache, dy):
    """Returns ``(grad_weight, grad_bias, dx)``."""
    dy = _check_batch(dy, params.n_out, "dy")
    if dy.shape[0] != cache.x.shape[0]:
        raise ValueError("dy batch size does not match cached input")
    return dy.T @ cache.x, dy.sum(axis=0), dy @ params.weight


def relu_forward(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0), ForwardCache(x=x)


def relu_backward(cache, dy):
    # subgradient 0 at exactly 0
    return np.where(cache.x > 0, dy, 0.0)


def mse_loss(y, t):
    """Batch mean of ``0.5 * ||y - t||^2``; returns ``(loss, dy)``."""
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if y.shape != t.shape:
        raise ValueError(f"shape mismatch: y {y.shape} vs t {t.shape}")
    n = y.shape[0] if y.ndim > 1 else 1
    diff = y - t
    return 0.5 * float(np.sum(diff * diff)) / n, diff / n


def softmax_cross_entropy(y, t):
    """Batch-mean softmax cross-entropy against one-hot (or soft) targets ``t``."""
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if y.shape != t.shape or y.ndim != 2:
        raise ValueError(f"shape mismatch: y {y.shape} vs t {t.shape}")
    z = y - y.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = y.shape[0]
    return -float(np.sum(t * log_p)) / n, (np.exp(log_p) - t) / n


def slice_logits(y, n_classes):
    y = np.asarray(y)
    if n_classes > y.shape[-1]:
        raise ValueError(f"cannot slice {n_classes} classes from width {y.shape[-1]}")
    return y[..., :n_classes]


def slice_logits_backward(d_logits, n_out):
    """Scatter the class gradient back into the first columns of a zero array."""
    d_logits = np.asarray(d_logits)
    k = d_logits.shape[-1]
    if k > n_out:
        raise ValueError(f"cannot scatter {k} classes into width {n_out}")
    out = np.zeros(d_logits.shape[:-1] + (n_out,))
    out[..., :k] = d_logits
    return out


def init_dense(n_in, n_out, rng):
    """He-normal weights, zero bias."""
    w = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))
    return DenseParams(weight=w, bias=np.zeros(n_out))


def init_cdlinear(n_in, n_out, block_size, rng):
    """He-normal circulant rows; every input coordinate feeds each output once,
    so the fan-in is ``n_in`` just as for a dense layer."""
    spec = LayerSpec("cdlinear", n_in, n_out, block_size)
    b = spec.block_size
    c = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out // b, n_in // b, b))
    return CirculantStack(coeffs=c, bias=np.zeros(n_out))
