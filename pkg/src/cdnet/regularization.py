"""Shannon dropout and the Fisher-trace penalty for circulant layers."""

from dataclasses import dataclass

import numpy as np

from .spectral import fft

__all__ = [
    "ALPHA_CD",
    "ShannonDropoutConfig",
    "FisherConfig",
    "shannon_dropout",
    "shannon_dropout_backward",
    "fisher_trace",
    "fisher_trace_grad",
]

#: Per-symbol noise rate used as the default drop probability.
ALPHA_CD = 0.0118


@dataclass(frozen=True)
class ShannonDropoutConfig:
    rate: float = ALPHA_CD
    enabled: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {self.rate}")


@dataclass(frozen=True)
class FisherConfig:
    strength: float = 1e-4
    epsilon: float = 1e-8
    enabled: bool = False

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError("fisher strength must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("fisher epsilon must be positive")


def shannon_dropout(x, cfg, training, rng=None):
    """Inverted Bernoulli dropout.

    Returns ``(x_tilde, mask)`` where ``mask`` is 1 for kept entries.  At
    inference, or with rate 0, the input is returned unchanged with an
    all-ones mask.  ``rng`` must be supplied when dropping in training mode.
    """
    if not 0.0 <= cfg.rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {cfg.rate}")
    x = np.asarray(x, dtype=np.float64)
    if not training or cfg.rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ValueError("an rng is required for training-mode dropout")
    mask = (rng.random(x.shape) >= cfg.rate).astype(np.float64)
    return x * mask / (1.0 - cfg.rate), mask


def shannon_dropout_backward(d_out, mask, cfg):
    return d_out * mask / (1.0 - cfg.rate)


def fisher_trace(coeffs, cfg):
    """``sum_{i,j,k} 1 / (|fft(c_ij)[k]|^2 + eps)`` over a coefficient stack.

    ``coeffs`` may be a :class:`~cdnet.layers.CirculantStack` or the raw
    ``(..., B)`` coefficient array; the transform runs over the last axis.
    """
    c = getattr(coeffs, "coeffs", coeffs)
    power = np.abs(fft(np.asarray(c, dtype=np.float64))) ** 2
    return float(np.sum(1.0 / (power + cfg.epsilon)))


def fisher_trace_grad(coeffs, cfg):
    """Exact gradient of :func:`fisher_trace` w.r.t. every coefficient.

    With ``P_k = |C_k|^2`` and ``C = fft(c)``, ``dP_k/dc_m = 2 Re(conj(C_k) w^{mk})``
    where ``w = exp(2 pi i / B)``; summing over k is a forward transform of
    ``conj(C) / (P + eps)^2``.
    """
    c = np.asarray(getattr(coeffs, "coeffs", coeffs), dtype=np.float64)
    c_hat = fft(c)
    weight = 1.0 / (np.abs(c_hat) ** 2 + cfg.epsilon) ** 2
    return -2.0 * fft(weight * np.conj(c_hat)).real
