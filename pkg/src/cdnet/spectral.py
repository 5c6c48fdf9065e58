"""Discrete Fourier transform and circulant algebra.

Sign convention
---------------
The forward transform uses a *positive* exponent::

    dft(x)[k] = sum_j x[j] * exp(+2*pi*i*j*k/B)

so that ``dft(c)`` is exactly the eigenvalue list of the circulant matrix
whose first row is ``c``.  The inverse carries the ``1/B`` factor::

    idft(X)[j] = (1/B) * sum_k X[k] * exp(-2*pi*i*j*k/B)

Under this convention Parseval reads ``sum |dft(x)|^2 == B * sum x^2``.
Note that this is the opposite sign of ``numpy.fft.fft``; the conjugations
in the weight-gradient formula depend on it.

``dft``/``idft`` are the direct O(B^2) reference transforms.  ``fft``/``ifft``
are the fast path used by the layers; both operate on the last axis and
broadcast over any leading batch axes.
"""

import numpy as np

__all__ = [
    "dft",
    "idft",
    "fft",
    "ifft",
    "circulant_matvec",
    "circulant_matvec_direct",
    "circulant_corr",
    "circulant_corr_direct",
    "reverse_coeffs",
    "materialize_circulant",
]


def _as_vector(x, name="x"):
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must have length >= 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def _check_pair(u, v, names=("c", "x")):
    u = _as_vector(u, names[0])
    v = _as_vector(v, names[1])
    if u.shape != v.shape:
        raise ValueError(
            f"length mismatch: len({names[0]})={u.size}, len({names[1]})={v.size}"
        )
    return u, v


def _phase_matrix(n, sign):
    jk = np.outer(np.arange(n), np.arange(n)) % n
    return np.exp(sign * 2j * np.pi * jk / n)


def dft(x):
    """Direct forward DFT, ``X[k] = sum_j x[j] exp(+2 pi i j k / B)``."""
    x = _as_vector(x)
    return _phase_matrix(x.size, +1) @ x.astype(np.complex128)


def idft(X):
    """Direct inverse DFT with ``1/B`` scaling; ``idft(dft(x)) == x``."""
    X = _as_vector(X, "X")
    return (_phase_matrix(X.size, -1) @ X.astype(np.complex128)) / X.size


def fft(x, axis=-1):
    """Fast forward DFT along ``axis`` (same convention as :func:`dft`)."""
    x = np.asarray(x)
    if x.shape[axis] == 0:
        raise ValueError("transform length must be >= 1")
    # numpy's inverse transform carries the positive exponent and a 1/n factor
    return np.fft.ifft(x, axis=axis) * x.shape[axis]


def ifft(X, axis=-1):
    """Fast inverse DFT along ``axis`` (same convention as :func:`idft`)."""
    X = np.asarray(X)
    if X.shape[axis] == 0:
        raise ValueError("transform length must be >= 1")
    return np.fft.fft(X, axis=axis) / X.shape[axis]


def circulant_matvec(c, x):
    """Circular convolution ``y[k] = sum_l c[(k - l) % B] x[l]``.

    Equivalent to ``materialize_circulant(c) @ x``, evaluated through the
    fast transform.
    """
    c, x = _check_pair(c, x)
    return ifft(fft(c) * fft(x)).real


def circulant_matvec_direct(c, x):
    """O(B^2) reference for :func:`circulant_matvec`."""
    c, x = _check_pair(c, x)
    n = c.size
    k = np.arange(n)[:, None]
    l = np.arange(n)[None, :]
    return (c[(k - l) % n] * x[None, :]).sum(axis=1)


def circulant_corr(u, v):
    """Circular cross-correlation ``r[m] = sum_k u[k] v[(k + m) % B]``."""
    u, v = _check_pair(u, v, ("u", "v"))
    return ifft(np.conj(fft(u)) * fft(v)).real


def circulant_corr_direct(u, v):
    """O(B^2) reference for :func:`circulant_corr`."""
    u, v = _check_pair(u, v, ("u", "v"))
    n = u.size
    m = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    return (u[None, :] * v[(k + m) % n]).sum(axis=1)


def reverse_coeffs(c):
    """Index reversal ``out[m] = c[(-m) % B]``.

    The circulant built from the reversed row is the transpose of the
    circulant built from ``c``.
    """
    c = np.asarray(c)
    if c.shape[-1] == 0:
        raise ValueError("c must have length >= 1")
    return np.roll(c[..., ::-1], 1, axis=-1)


def materialize_circulant(c):
    """Dense ``B x B`` matrix with entry ``(k, l) = c[(k - l) % B]``."""
    c = _as_vector(c, "c")
    n = c.size
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return c[idx]
