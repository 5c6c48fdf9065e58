"""Sequential networks built from :mod:`cdnet.layers` kernels, plus JSON I/O."""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import layers as L
from .regularization import shannon_dropout, shannon_dropout_backward

__all__ = [
    "NetworkSpec",
    "Network",
    "param_count",
    "dense_mlp_spec",
    "cd_mlp_spec",
    "ARCHITECTURES",
    "MODEL_FORMAT",
]

MODEL_FORMAT = "cdnet-model/1"


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple
    n_classes: int = 10

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.n_out != nxt.n_in:
                raise ValueError(f"layer widths do not chain: {prev.n_out} -> {nxt.n_in}")
        if self.n_classes > self.n_out:
            raise ValueError(f"n_classes={self.n_classes} exceeds output width {self.n_out}")

    @property
    def n_in(self):
        return self.layers[0].n_in

    @property
    def n_out(self):
        return self.layers[-1].n_out

    def to_dict(self):
        return {
            "n_classes": self.n_classes,
            "layers": [
                {"kind": s.kind, "n_in": s.n_in, "n_out": s.n_out, "block_size": s.block_size}
                for s in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(L.LayerSpec(**s) for s in d["layers"]), d.get("n_classes", 10))


def param_count(spec):
    return sum(s.num_params for s in spec.layers)


def _mlp(widths, kind, block_size, n_classes):
    layers = []
    for i, (a, b) in enumerate(zip(widths, widths[1:])):
        layers.append(L.LayerSpec(kind, a, b, block_size))
        if i < len(widths) - 2:
            layers.append(L.LayerSpec("relu", b, b))
    return NetworkSpec(tuple(layers), n_classes)


def dense_mlp_spec(widths=(64, 64, 64, 10), n_classes=10):
    return _mlp(widths, "dense", 1, n_classes)


def cd_mlp_spec(block_size, widths=(64, 64, 64), n_classes=10):
    """Circulant MLP whose output layer is padded to a multiple of ``block_size``."""
    out = -(-n_classes // block_size) * block_size
    return _mlp(tuple(widths) + (out,), "cdlinear", block_size, n_classes)


ARCHITECTURES = {
    "dense": dense_mlp_spec,
    "cd_b4": lambda: cd_mlp_spec(4),
    "cd_b8": lambda: cd_mlp_spec(8),
}


class Network:
    """Parameters for every layer of a :class:`NetworkSpec` (``None`` for ReLU)."""

    def __init__(self, spec, params):
        if len(params) != len(spec.layers):
            raise ValueError("one parameter entry per layer is required")
        self.spec = spec
        self.params = list(params)

    @classmethod
    def init(cls, spec, rng):
        params = []
        for s in spec.layers:
            if s.kind == "dense":
                params.append(L.init_dense(s.n_in, s.n_out, rng))
            elif s.kind == "cdlinear":
                params.append(L.init_cdlinear(s.n_in, s.n_out, s.block_size, rng))
            else:
                params.append(None)
        return cls(spec, params)

    @property
    def num_params(self):
        return sum(p.num_params for p in self.params if p is not None)

    def weight_layers(self):
        return [(i, s, p) for i, (s, p) in enumerate(zip(self.spec.layers, self.params))
                if p is not None]

    def arrays(self):
        """Flat list of trainable arrays, in layer order (weights then bias)."""
        out = []
        for _, s, p in self.weight_layers():
            out.append(p.coeffs if s.kind == "cdlinear" else p.weight)
            out.append(p.bias)
        return out

    def set_arrays(self, arrays):
        it = iter(arrays)
        for _, s, p in self.weight_layers():
            if s.kind == "cdlinear":
                p.coeffs = next(it)
            else:
                p.weight = next(it)
            p.bias = next(it)

    def forward(self, x, dropout=None, rng=None):
        """Return ``(logits, tape)``; ``logits`` are already sliced to ``n_classes``.

        ``dropout`` (a :class:`~cdnet.regularization.ShannonDropoutConfig`) is
        applied to the input of every weight layer when enabled.
        """
        tape = []
        h = np.asarray(x, dtype=np.float64)
        train_drop = dropout is not None and dropout.enabled
        for s, p in zip(self.spec.layers, self.params):
            mask = None
            if s.kind == "relu":
                h, cache = L.relu_forward(h)
            else:
                if train_drop:
                    h, mask = shannon_dropout(h, dropout, True, rng)
                fwd = L.cdlinear_forward if s.kind == "cdlinear" else L.dense_forward
                h, cache = fwd(p, h)
            tape.append((cache, mask))
        return L.slice_logits(h, self.spec.n_classes), tape

    def backward(self, tape, d_logits, dropout=None):
        """Gradients aligned with :meth:`arrays`."""
        d = L.slice_logits_backward(d_logits, self.spec.n_out)
        grads = []
        for s, p, (cache, mask) in reversed(list(zip(self.spec.layers, self.params, tape))):
            if s.kind == "relu":
                d = L.relu_backward(cache, d)
                continue
            bwd = L.cdlinear_backward if s.kind == "cdlinear" else L.dense_backward
            gw, gb, d = bwd(p, cache, d)
            if mask is not None:
                d = shannon_dropout_backward(d, mask, dropout)
            grads.append(gb)
            grads.append(gw)
        return grads[::-1]

    def predict(self, x):
        """Class index per row; ties go to the lowest index."""
        logits, _ = self.forward(x)
        return np.argmax(logits, axis=1)

    def weight_layer_inputs(self, x):
        """Yield ``(layer_index, spec, params, input_activations)`` for weight layers."""
        h = np.asarray(x, dtype=np.float64)
        out = []
        for i, (s, p) in enumerate(zip(self.spec.layers, self.params)):
            if p is not None:
                out.append((i, s, p, h))
                fwd = L.cdlinear_forward if s.kind == "cdlinear" else L.dense_forward
                h, _ = fwd(p, h)
            else:
                h, _ = L.relu_forward(h)
        return out

    def to_dict(self):
        layers = []
        for s, p in zip(self.spec.layers, self.params):
            entry = {"kind": s.kind, "n_in": s.n_in, "n_out": s.n_out, "block_size": s.block_size}
            if s.kind == "dense":
                entry["weight"] = p.weight.ravel().tolist()
                entry["bias"] = p.bias.tolist()
            elif s.kind == "cdlinear":
                entry["coeffs"] = p.coeffs.ravel().tolist()
                entry["bias"] = p.bias.tolist()
            layers.append(entry)
        return {"format": MODEL_FORMAT, "n_classes": self.spec.n_classes, "layers": layers}

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {d.get('format')!r}")
        specs, params = [], []
        for e in d["layers"]:
            s = L.LayerSpec(e["kind"], e["n_in"], e["n_out"], e.get("block_size", 1))
            specs.append(s)
            if s.kind == "dense":
                w = np.array(e["weight"], dtype=np.float64).reshape(s.n_out, s.n_in)
                params.append(L.DenseParams(w, np.array(e["bias"], dtype=np.float64)))
            elif s.kind == "cdlinear":
                b = s.block_size
                c = np.array(e["coeffs"], dtype=np.float64).reshape(s.n_out // b, s.n_in // b, b)
                params.append(L.CirculantStack(c, np.array(e["bias"], dtype=np.float64)))
            else:
                params.append(None)
        return cls(NetworkSpec(tuple(specs), d.get("n_classes", 10)), params)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))
