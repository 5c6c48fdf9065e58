"""Hessian-spectrum diagnostics for dense and block-circulant layers.

Two measurement paths are exposed, matching how the condition numbers are
reported for the experiment:

* circulant layers: the per-block Hessian of the squared loss is circulant,
  so its eigenvalues are the batch mean of ``|fft(X_j)[k]|^2`` over the
  layer's input blocks (no decomposition required);
* dense layers: squared singular values of ``W``, obtained with a cyclic
  Jacobi eigen-solver on the smaller Gram matrix.

These are different objects (input statistics vs weight spectrum); reports
carry a ``method`` tag per layer so the asymmetry stays visible.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import dft, fft, materialize_circulant

__all__ = [
    "ConsistencyError",
    "LayerSpectrum",
    "SpectrumReport",
    "BruteForceHessian",
    "ConditionBoundReport",
    "jacobi_eigh",
    "condition_number",
    "hessian_spectrum_closed_form",
    "hessian_brute_force",
    "hessian_finite_difference",
    "dense_hessian_spectrum",
    "model_condition_number",
    "population_spectrum",
    "verify_condition_bound",
    "verify_theorem1",
]

DEGENERATE_FLOOR = 1e-300


class ConsistencyError(RuntimeError):
    """An internal cross-check between two computation paths failed."""


@dataclass
class LayerSpectrum:
    eigenvalues: np.ndarray  # sorted ascending
    kappa: float
    method: str  # "cd_fft" | "dense_svd" | "brute_force"
    degenerate: bool = False
    layer: int = 0

    def to_dict(self):
        return {
            "layer": self.layer,
            "method": self.method,
            "kappa": _json_float(self.kappa),
            "degenerate": self.degenerate,
            "eigenvalues": [float(v) for v in self.eigenvalues],
        }


@dataclass
class SpectrumReport:
    layers: list
    mean_kappa: float
    metadata: dict = field(default_factory=dict)

    @property
    def kappas(self):
        return [s.kappa for s in self.layers]

    def to_dict(self):
        return {
            "mean_kappa": _json_float(self.mean_kappa),
            "layers": [s.to_dict() for s in self.layers],
            "metadata": dict(self.metadata),
        }

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["layer", "method", "index", "eigenvalue"])
        for s in self.layers:
            for idx, val in enumerate(s.eigenvalues):
                writer.writerow([s.layer, s.method, idx, repr(float(val))])
        return buf.getvalue()


def _json_float(x):
    # JSON has no infinity literal
    return "inf" if math.isinf(x) else float(x)


def condition_number(eigenvalues):
    """``max / min`` of nonnegative eigenvalues; ``(inf, True)`` if min underflows."""
    ev = np.asarray(eigenvalues, dtype=np.float64)
    lo, hi = float(ev.min()), float(ev.max())
    if lo < DEGENERATE_FLOOR:
        return math.inf, True
    return hi / lo, False


def jacobi_eigh(a, tol=1e-12, max_sweeps=60):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Sweeps continue until the off-diagonal Frobenius norm falls below
    ``tol * ||A||_F``.  Returns ``(eigenvalues, eigenvectors)`` sorted by
    ascending eigenvalue, with eigenvectors as columns.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=1e-12, atol=1e-14 * max(1.0, np.abs(a).max())):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v

    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        if np.linalg.norm(a[offdiag]) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                g = 100.0 * abs(apq)
                # below rounding level of both diagonal entries: drop it
                if abs(a[p, p]) + g == abs(a[p, p]) and abs(a[q, q]) + g == abs(a[q, q]):
                    a[p, q] = a[q, p] = 0.0
                    continue
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise ConsistencyError(f"Jacobi did not converge in {max_sweeps} sweeps")

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def hessian_spectrum_closed_form(x_batch, block_size, layer=0):
    """Eigenvalues of a circulant layer's weight Hessian from its inputs alone.

    ``x_batch`` is ``(N, n_in)``.  For input block ``j`` and frequency ``k``
    the eigenvalue is ``mean_n |fft(X_j^{(n)})[k]|^2``; the coefficient values
    never enter.  The returned spectrum also exposes the ``(K_i, B)`` grid
    as ``LayerSpectrum.eigenvalues`` sorted flat.
    """
    x = np.asarray(x_batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    b = int(block_size)
    if b < 1 or x.shape[1] % b:
        raise ValueError(f"input dim {x.shape[1]} is not divisible by block size {b}")
    grid = spectrum_grid(x, b)
    kappa, degenerate = condition_number(grid)
    return LayerSpectrum(np.sort(grid.ravel()), kappa, "cd_fft", degenerate, layer)


def spectrum_grid(x_batch, block_size):
    """Unsorted ``(K_i, B)`` array of per-block, per-frequency eigenvalues."""
    x = np.asarray(x_batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    blocks = x.reshape(x.shape[0], -1, block_size)
    return np.mean(np.abs(fft(blocks)) ** 2, axis=0)


@dataclass
class BruteForceHessian:
    matrix: np.ndarray
    eigenvalues: np.ndarray  # indexed by frequency k, not sorted
    fd_matrix: np.ndarray = None
    fd_eigenvalues: np.ndarray = None  # sorted ascending
    circulant_deviation: float = 0.0


def _block_loss(c, x, t):
    r = materialize_circulant(c) @ x - t
    return 0.5 * float(r @ r)


def hessian_finite_difference(c, x, t, step=1e-2):
    """Hessian of ``0.5 * ||C(c) x - t||^2`` by second-order central differences."""
    c = np.asarray(c, dtype=np.float64)
    n = c.size
    h = np.zeros((n, n))
    eye = np.eye(n) * step
    for m in range(n):
        for mp in range(m, n):
            val = (
                _block_loss(c + eye[m] + eye[mp], x, t)
                - _block_loss(c + eye[m] - eye[mp], x, t)
                - _block_loss(c - eye[m] + eye[mp], x, t)
                + _block_loss(c - eye[m] - eye[mp], x, t)
            ) / (4.0 * step * step)
            h[m, mp] = h[mp, m] = val
    return h


def hessian_brute_force(c, x, t, circulant_tol=1e-12, fd=True):
    """Explicit per-block Hessian of ``0.5 * ||C(c) x - t||^2`` w.r.t. ``c``.

    Builds ``H[m, m'] = sum_k x[(k - m) % B] x[(k - m') % B]``, checks it is
    circulant, and takes its eigenvalues as the DFT of the first row.  With
    ``fd=True`` a finite-difference Hessian and its Jacobi eigenvalues are
    attached for cross-checking.
    """
    c = np.asarray(c, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if not (c.shape == x.shape == t.shape) or c.ndim != 1:
        raise ValueError("c, x and t must be vectors of equal length")
    n = x.size
    k = np.arange(n)
    # column m of the Jacobian dy/dc is x cyclically shifted by m
    shifted = np.stack([x[(k - m) % n] for m in range(n)])
    h = shifted @ shifted.T

    # circulant iff H[m, m'] depends only on (m' - m) mod B
    ref = h[0]
    scale = max(1.0, float(np.abs(h).max()))
    deviation = 0.0
    for m in range(n):
        deviation = max(deviation, float(np.abs(h[m] - np.roll(ref, m)).max()) / scale)
    if deviation > circulant_tol:
        raise ConsistencyError(f"Hessian is not circulant (deviation {deviation:.3e})")

    result = BruteForceHessian(h, dft(ref).real, circulant_deviation=deviation)
    if fd:
        result.fd_matrix = hessian_finite_difference(c, x, t)
        result.fd_eigenvalues = jacobi_eigh(result.fd_matrix)[0]
    return result


def dense_hessian_spectrum(weight, layer=0):
    """Squared singular values of ``weight`` via Jacobi on the smaller Gram matrix."""
    w = np.asarray(weight, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError("weight must be a matrix")
    if not np.all(np.isfinite(w)):
        raise ValueError("weight has non-finite entries")
    gram = w.T @ w if w.shape[1] <= w.shape[0] else w @ w.T
    ev = np.clip(jacobi_eigh(gram)[0], 0.0, None)
    kappa, degenerate = condition_number(ev)
    return LayerSpectrum(ev, kappa, "dense_svd", degenerate, layer)


def model_condition_number(network, x_batch):
    """Per-weight-layer spectra and their arithmetic-mean condition number.

    Circulant layers are measured from the activations that reach them on
    ``x_batch``; dense layers from their weight matrix.
    """
    spectra = []
    for idx, spec, params, inputs in network.weight_layer_inputs(x_batch):
        if spec.kind == "cdlinear":
            spectra.append(hessian_spectrum_closed_form(inputs, spec.block_size, layer=idx))
        else:
            spectra.append(dense_hessian_spectrum(params.weight, layer=idx))
    kappas = [s.kappa for s in spectra]
    mean_kappa = math.inf if any(math.isinf(k) for k in kappas) else float(np.mean(kappas))
    return SpectrumReport(
        spectra,
        mean_kappa,
        metadata={
            "aggregation": "arithmetic mean over weight layers",
            "cd_fft": "batch-mean |fft(input block)|^2 (depends on inputs, not weights)",
            "dense_svd": "squared singular values of W (depends on weights, not inputs)",
            "n_samples": int(np.asarray(x_batch).shape[0]),
        },
    )


def population_spectrum(autocovariance):
    """Expected ``|fft(X)[k]|^2`` for a stationary zero-mean block process.

    For a process whose cyclic autocovariance is ``r`` (``r[d] = E x_k x_{k+d}``)
    the expectation is ``B * dft(r)[k]``.  A whitened process has
    ``r = e_0 / B`` and hence a spectrum of exact ones.
    """
    r = np.asarray(autocovariance, dtype=np.float64)
    return r.size * dft(r).real


@dataclass
class ConditionBoundReport:
    block_size: int
    sample_sizes: list
    kappas: dict  # N -> array of per-trial kappa
    constant: float
    whitened: bool
    population_kappa: float

    def bound(self, n):
        return 1.0 + self.constant * math.sqrt(self.block_size / n)

    def pass_fraction(self, n):
        return float(np.mean(self.kappas[n] <= self.bound(n)))

    def median_ratio(self, n):
        """Median of ``(kappa - 1) / sqrt(B / N)``."""
        return float(np.median((self.kappas[n] - 1.0) / math.sqrt(self.block_size / n)))

    def rows(self):
        out = []
        for n in self.sample_sizes:
            k = self.kappas[n]
            out.append({
                "N": n,
                "sqrt_B_over_N": math.sqrt(self.block_size / n),
                "median_kappa_minus_1": float(np.median(k - 1.0)),
                "max_kappa": float(k.max()),
                "bound": self.bound(n),
                "pass_fraction": self.pass_fraction(n),
                "median_ratio": self.median_ratio(n),
            })
        return out

    def to_dict(self):
        return {
            "block_size": self.block_size,
            "constant": self.constant,
            "whitened": self.whitened,
            "population_kappa": self.population_kappa,
            "rows": self.rows(),
        }


def verify_condition_bound(block_size=4, sample_sizes=(100, 1000, 10000), trials=100,
                           seed=0, constant=5.0, whiten=False, blocks=1):
    """Monte-Carlo check of ``kappa <= 1 + constant * sqrt(B / N)``.

    Each trial draws ``N`` Gaussian signals scaled so every DFT coefficient has
    unit population variance, optionally whitens them empirically with
    :func:`cdnet.data.spectral_whiten`, and records the condition number of
    the batch-mean spectrum.
    """
    from .data import gen_synthetic, spectral_whiten

    b = int(block_size)
    sizes = [int(n) for n in sample_sizes]
    if any(n < b for n in sizes):
        raise ValueError(f"every N must be >= B={b}")
    seq = np.random.SeedSequence(seed)
    kappas = {}
    for n, child in zip(sizes, seq.spawn(len(sizes))):
        vals = np.empty(trials)
        for trial, tseed in enumerate(child.generate_state(trials)):
            x = gen_synthetic("gaussian", n, b * blocks, b, int(tseed)) / math.sqrt(b)
            if whiten:
                x = spectral_whiten(x, b)[0]
            vals[trial] = condition_number(spectrum_grid(x, b))[0]
        kappas[n] = vals
    e0 = np.zeros(b)
    e0[0] = 1.0 / b
    pop_kappa, _ = condition_number(population_spectrum(e0))
    return ConditionBoundReport(b, sizes, kappas, constant, whiten, pop_kappa)


def verify_theorem1(block_sizes=(2, 3, 4, 8), trials=10, seed=0):
    """Compare closed-form eigenvalues with the explicit and finite-difference Hessians.

    Returns a dict with the worst relative deviations across all trials.
    """
    rng = np.random.default_rng(seed)
    worst = {"explicit": 0.0, "finite_difference": 0.0, "circulant": 0.0, "weight_independence": 0.0}
    for b in block_sizes:
        for _ in range(trials):
            c, x, t = rng.normal(size=(3, b))
            closed = np.abs(fft(x)) ** 2
            brute = hessian_brute_force(c, x, t)
            worst["explicit"] = max(worst["explicit"], _max_rel(brute.eigenvalues, closed))
            worst["finite_difference"] = max(
                worst["finite_difference"], _max_rel(brute.fd_eigenvalues, np.sort(closed))
            )
            worst["circulant"] = max(worst["circulant"], brute.circulant_deviation)
            # same inputs, different coefficients: identical Hessian
            other = hessian_brute_force(rng.normal(size=b), x, t, fd=False)
            worst["weight_independence"] = max(
                worst["weight_independence"], float(np.abs(other.matrix - brute.matrix).max())
            )
    return worst


def _max_rel(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), DEGENERATE_FLOOR)))
