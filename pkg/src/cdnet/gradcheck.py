"""Central finite-difference checks for every hand-written backward pass."""

from dataclasses import asdict, dataclass

import numpy as np

from . import layers as L
from .regularization import FisherConfig, fisher_trace, fisher_trace_grad

__all__ = ["DEFAULT_CONFIGS", "CheckResult", "relative_error", "check_array", "run_grad_checks"]

DEFAULT_CONFIGS = ((8, 8, 2), (16, 8, 4), (12, 12, 3))


@dataclass
class CheckResult:
    name: str
    config: tuple
    n_coords: int
    max_rel_error: float
    worst_index: tuple
    passed: bool

    def to_dict(self):
        d = asdict(self)
        d["config"] = list(self.config)
        d["worst_index"] = [int(i) for i in self.worst_index]
        return d


def relative_error(analytic, numeric, floor=1e-10):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_array(loss_fn, array, analytic, n_coords, rng, step=1e-5):
    """Compare ``analytic`` with central differences of ``loss_fn()`` at sampled entries.

    ``array`` is perturbed in place and restored.  All entries are checked
    when it has at most ``n_coords`` of them.  Returns ``(max_error, index, count)``.
    """
    if array.size <= n_coords:
        coords = list(np.ndindex(array.shape))
    else:
        flat = rng.choice(array.size, size=n_coords, replace=False)
        coords = [np.unravel_index(i, array.shape) for i in flat]
    worst, worst_idx = 0.0, coords[0]
    for idx in coords:
        orig = array[idx]
        array[idx] = orig + step
        up = loss_fn()
        array[idx] = orig - step
        down = loss_fn()
        array[idx] = orig
        err = relative_error(float(analytic[idx]), (up - down) / (2.0 * step))
        if err > worst:
            worst, worst_idx = err, idx
    return worst, tuple(int(i) for i in worst_idx), len(coords)


def _config_checks(n_in, n_out, b, rng, n_coords, step, batch=4):
    """Yield ``(name, loss_fn, array, analytic)`` for one layer configuration."""
    x = rng.normal(size=(batch, n_in))
    t = rng.normal(size=(batch, n_out))

    cd = L.CirculantStack(rng.normal(size=(n_out // b, n_in // b, b)), rng.normal(size=n_out))
    y, cache = L.cdlinear_forward(cd, x)
    _, dy = L.mse_loss(y, t)
    gc, gb, dx = L.cdlinear_backward(cd, cache, dy)

    def cd_loss():
        return L.mse_loss(L.cdlinear_forward(cd, x)[0], t)[0]

    yield "cdlinear.coeffs", cd_loss, cd.coeffs, gc
    yield "cdlinear.bias", cd_loss, cd.bias, gb
    yield "cdlinear.input", cd_loss, x, dx

    dn = L.DenseParams(rng.normal(size=(n_out, n_in)), rng.normal(size=n_out))
    y, cache = L.dense_forward(dn, x)
    _, dy = L.mse_loss(y, t)
    gw, gb, dx = L.dense_backward(dn, cache, dy)

    def dense_loss():
        return L.mse_loss(L.dense_forward(dn, x)[0], t)[0]

    yield "dense.weight", dense_loss, dn.weight, gw
    yield "dense.bias", dense_loss, dn.bias, gb
    yield "dense.input", dense_loss, x, dx

    # keep ReLU inputs at least 0.1 away from the kink
    xr = rng.choice([-1.0, 1.0], size=(batch, n_in)) * (0.1 + np.abs(rng.normal(size=(batch, n_in))))
    tr = rng.normal(size=(batch, n_in))
    h, cache = L.relu_forward(xr)
    _, dh = L.mse_loss(h, tr)
    yield "relu.input", lambda: L.mse_loss(L.relu_forward(xr)[0], tr)[0], xr, L.relu_backward(cache, dh)

    ym = rng.normal(size=(batch, n_out))
    yield "mse.input", lambda: L.mse_loss(ym, t)[0], ym, L.mse_loss(ym, t)[1]
    th = L.slice_logits_backward(np.eye(n_out)[rng.integers(0, n_out, size=batch)], n_out)
    yield ("cross_entropy.input", lambda: L.softmax_cross_entropy(ym, th)[0], ym,
           L.softmax_cross_entropy(ym, th)[1])

    fcfg = FisherConfig()
    coeffs = rng.normal(size=(n_out // b, n_in // b, b))
    yield "fisher.coeffs", lambda: fisher_trace(coeffs, fcfg), coeffs, fisher_trace_grad(coeffs, fcfg)


def run_grad_checks(configs=DEFAULT_CONFIGS, tolerance=1e-4, n_coords=20, seed=0, step=1e-5):
    """Run the full suite; returns a list of :class:`CheckResult`."""
    results = []
    rng = np.random.default_rng(seed)
    for n_in, n_out, b in configs:
        L.LayerSpec("cdlinear", n_in, n_out, b)  # validates divisibility
        for name, fn, arr, grad in _config_checks(n_in, n_out, b, rng, n_coords, step):
            err, idx, count = check_array(fn, arr, grad, n_coords, rng, step)
            results.append(CheckResult(name, (n_in, n_out, b), count, err, idx, err < tolerance))
    return results
