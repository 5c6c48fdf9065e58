"""Digits dataset I/O, deterministic splitting, and synthetic signal generators.

Every random draw goes through ``numpy.random.default_rng`` (the PCG64
generator), so results are bit-reproducible for a given seed within this
package.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectral import fft, ifft

__all__ = [
    "N_FEATURES",
    "N_CLASSES",
    "DigitsDataset",
    "SplitDataset",
    "DatasetFormatError",
    "load_digits_csv",
    "split_deterministic",
    "normalize",
    "one_hot",
    "spectral_whiten",
    "gen_synthetic",
]

N_FEATURES = 64
N_CLASSES = 10
WHITEN_FLOOR = 1e-12


class DatasetFormatError(ValueError):
    """Malformed dataset file; the message names the offending row."""


@dataclass
class DigitsDataset:
    features: np.ndarray  # (N, 64), raw range 0..16
    labels: np.ndarray  # (N,), ints in 0..9

    def __len__(self):
        return len(self.labels)


@dataclass
class SplitDataset:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray


def load_digits_csv(path):
    """Parse ``path``: per row 64 comma-separated reals then an integer label."""
    path = Path(path)
    feats, labels = [], []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != N_FEATURES + 1:
                raise DatasetFormatError(
                    f"{path}: row {lineno} has {len(row)} columns, expected {N_FEATURES + 1}"
                )
            try:
                values = [float(v) for v in row[:N_FEATURES]]
                label = int(row[N_FEATURES])
            except ValueError as exc:
                raise DatasetFormatError(f"{path}: row {lineno}: {exc}") from None
            if not 0 <= label < N_CLASSES:
                raise DatasetFormatError(f"{path}: row {lineno} has label {label} out of range")
            if not all(np.isfinite(values)):
                raise DatasetFormatError(f"{path}: row {lineno} has non-finite features")
            feats.append(values)
            labels.append(label)
    if not labels:
        raise DatasetFormatError(f"{path}: no data rows")
    return DigitsDataset(np.array(feats, dtype=np.float64), np.array(labels, dtype=np.int64))


def split_deterministic(ds, train_n=1437, seed=0):
    """Seeded shuffle-split: the first ``train_n`` permuted indices form the train set."""
    n = len(ds)
    if not 0 < train_n < n:
        raise ValueError(f"train_n must lie in (0, {n}), got {train_n}")
    perm = np.random.default_rng(seed).permutation(n)
    tr, te = np.sort(perm[:train_n]), np.sort(perm[train_n:])
    return SplitDataset(ds.features[tr], ds.labels[tr], ds.features[te], ds.labels[te], tr, te)


def normalize(features):
    """Scale raw 0..16 intensities to [0, 1].  Apply exactly once."""
    return np.asarray(features, dtype=np.float64) / 16.0


def one_hot(labels, n_classes=N_CLASSES):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def spectral_whiten(batch, block_size):
    """Rescale every per-block DFT coefficient to unit variance across the batch.

    The variance of coefficient ``(j, k)`` is ``mean_n |F_n - mean_n F_n|^2``.
    Conjugate frequencies share a variance, so the result is real after the
    inverse transform.  Returns ``(whitened, degenerate)`` where
    ``degenerate`` is a ``(K, B)`` boolean mask of coefficients whose
    standard deviation was below the ``1e-12`` floor.
    """
    x = np.asarray(batch, dtype=np.float64)
    b = int(block_size)
    if x.ndim != 2 or x.shape[1] % b:
        raise ValueError(f"batch of shape {x.shape} is not divisible into blocks of {b}")
    if x.shape[0] < 2:
        raise ValueError("whitening needs at least two samples")
    spec = fft(x.reshape(x.shape[0], -1, b))
    std = np.sqrt(np.mean(np.abs(spec - spec.mean(axis=0)) ** 2, axis=0))
    degenerate = std < WHITEN_FLOOR
    spec = spec / np.maximum(std, WHITEN_FLOOR)
    return ifft(spec).real.reshape(x.shape), degenerate


def gen_synthetic(kind, n, dim, block_size, seed):
    """Synthetic input batches of shape ``(n, dim)``.

    ``gaussian``: i.i.d. standard normal entries.
    ``flat_spectrum``: every block has ``|fft(X_j)[k]| == 1`` for all ``k``,
    built from random phases with Hermitian symmetry so the signal is real.
    """
    b = int(block_size)
    if b < 1 or dim % b:
        raise ValueError(f"dim {dim} is not divisible by block size {b}")
    rng = np.random.default_rng(seed)
    if kind == "gaussian":
        return rng.standard_normal((n, dim))
    if kind == "flat_spectrum":
        k = dim // b
        phase = rng.uniform(0.0, 2.0 * np.pi, size=(n, k, b))
        coef = np.exp(1j * phase)
        idx = np.arange(b)
        mirror = (-idx) % b
        # self-conjugate bins (0 and B/2) must be real: +-1
        self_conj = idx == mirror
        signs = np.where(rng.random((n, k, int(self_conj.sum()))) < 0.5, -1.0, 1.0)
        coef[..., self_conj] = signs
        upper = idx > mirror
        coef[..., upper] = np.conj(coef[..., mirror[upper]])
        return ifft(coef).real.reshape(n, dim)
    raise ValueError(f"unknown synthetic kind {kind!r}")
