"""SGD with momentum, the epoch loop, and the multi-seed experiment driver."""

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import N_CLASSES, normalize, one_hot, split_deterministic
from .diagnostics import model_condition_number
from .layers import NonFiniteError, mse_loss, softmax_cross_entropy
from .network import ARCHITECTURES, Network, param_count
from .regularization import FisherConfig, ShannonDropoutConfig, fisher_trace, fisher_trace_grad

__all__ = [
    "TrainingConfig",
    "RunResult",
    "ExperimentSummary",
    "TrainingDivergedError",
    "sgd_momentum_step",
    "train_model",
    "run_experiment",
    "MODEL_LABELS",
]

MODEL_LABELS = {
    "dense": "Dense MLP",
    "cd_b4": "CD-MLP (B=4)",
    "cd_b8": "CD-MLP (B=8)",
}

WALL_CLOCK_FIELDS = ("wall_clock_seconds",)

LOSSES = {"cross_entropy": softmax_cross_entropy, "mse": mse_loss}


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 25
    seeds: tuple = (0, 1, 2)
    dropout: ShannonDropoutConfig = ShannonDropoutConfig()
    fisher: FisherConfig = FisherConfig()
    loss: str = "cross_entropy"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.loss not in LOSSES:
            raise ValueError(f"unsupported loss {self.loss!r}; choose from {sorted(LOSSES)}")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def to_dict(self):
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d


@dataclass
class RunResult:
    model: str
    seed: int
    parameter_count: int
    train_loss: list
    test_accuracy: list
    final_train_loss: float
    final_test_accuracy: float
    layer_kappas: list
    mean_kappa: float
    wall_clock_seconds: float = 0.0
    network: Network = field(default=None, repr=False, compare=False)
    spectrum: object = field(default=None, repr=False, compare=False)

    def to_dict(self, include_wall_clock=True):
        d = {
            "model": self.model,
            "seed": self.seed,
            "parameter_count": self.parameter_count,
            "train_loss": list(self.train_loss),
            "test_accuracy": list(self.test_accuracy),
            "final_train_loss": self.final_train_loss,
            "final_test_accuracy": self.final_test_accuracy,
            "layer_kappas": [_json_num(k) for k in self.layer_kappas],
            "mean_kappa": _json_num(self.mean_kappa),
        }
        if include_wall_clock:
            d["wall_clock_seconds"] = self.wall_clock_seconds
        return d

    def curves_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "test_accuracy"])
        for e, (l, a) in enumerate(zip(self.train_loss, self.test_accuracy), start=1):
            w.writerow([e, repr(l), repr(a)])
        return buf.getvalue()


def _json_num(x):
    return "inf" if math.isinf(x) else float(x)


def sgd_momentum_step(params, grads, velocity, lr, momentum):
    """Heavy-ball update ``v <- momentum * v + g``; ``theta <- theta - lr * v``.

    Works on parallel lists of arrays and returns new ``(params, velocity)``
    lists; inputs are not modified.
    """
    if not (len(params) == len(grads) == len(velocity)):
        raise ValueError("params, grads and velocity must have equal length")
    new_p, new_v = [], []
    for p, g, v in zip(params, grads, velocity):
        if not (np.shape(p) == np.shape(g) == np.shape(v)):
            raise ValueError(f"shape mismatch: {np.shape(p)}, {np.shape(g)}, {np.shape(v)}")
        v = momentum * v + g
        new_v.append(v)
        new_p.append(p - lr * v)
    return new_p, new_v


def _seed_streams(seed, dropout_seed):
    init, shuffle = np.random.SeedSequence(seed).spawn(2)
    drop = np.random.SeedSequence([seed, dropout_seed, 0x5D])
    return (np.random.default_rng(init), np.random.default_rng(shuffle),
            np.random.default_rng(drop))


def _loss_and_grads(net, x, t, cfg, rng):
    logits, tape = net.forward(x, dropout=cfg.dropout, rng=rng)
    loss, d_logits = LOSSES[cfg.loss](logits, t)
    grads = net.backward(tape, d_logits, dropout=cfg.dropout)
    if cfg.fisher.enabled and cfg.fisher.strength > 0:
        gi = 0
        for _, s, p in net.weight_layers():
            if s.kind == "cdlinear":
                loss += cfg.fisher.strength * fisher_trace(p.coeffs, cfg.fisher)
                grads[gi] = grads[gi] + cfg.fisher.strength * fisher_trace_grad(p.coeffs, cfg.fisher)
            gi += 2
    return loss, grads


def _accuracy(net, x, labels):
    return float(np.mean(net.predict(x) == labels))


def train_model(spec, split, cfg, seed, model_name="model"):
    """Train one network; deterministic in ``(spec, split, cfg, seed)``.

    ``split`` holds normalised features.  Per-epoch training loss is the data
    loss (``cfg.loss``) over the full training set after the epoch, without
    dropout or the Fisher term.  Condition numbers are measured on the final
    weights with the full training set as the input batch.
    """
    if split.train_x.shape[1] != spec.n_in:
        raise ValueError(f"data has {split.train_x.shape[1]} features, network expects {spec.n_in}")
    if spec.n_classes < N_CLASSES:
        raise ValueError("network must expose at least 10 classes")
    start = time.perf_counter()
    init_rng, shuffle_rng, drop_rng = _seed_streams(seed, cfg.dropout.rng_seed)
    net = Network.init(spec, init_rng)
    targets = one_hot(split.train_y, spec.n_classes)
    n = split.train_x.shape[0]

    params = net.arrays()
    velocity = [np.zeros_like(p) for p in params]
    losses, accs = [], []
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, grads = _loss_and_grads(
                        net, split.train_x[idx], targets[idx], cfg, drop_rng)
            except NonFiniteError:
                raise TrainingDivergedError(epoch, math.nan) from None
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            params, velocity = sgd_momentum_step(
                params, grads, velocity, cfg.learning_rate, cfg.momentum)
            net.set_arrays(params)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                logits, _ = net.forward(split.train_x)
                epoch_loss, _ = LOSSES[cfg.loss](logits, targets)
        except NonFiniteError:
            raise TrainingDivergedError(epoch, math.nan) from None
        if not math.isfinite(epoch_loss):
            raise TrainingDivergedError(epoch, epoch_loss)
        losses.append(epoch_loss)
        accs.append(_accuracy(net, split.test_x, split.test_y))

    report = model_condition_number(net, split.train_x)
    return RunResult(
        model=model_name,
        seed=int(seed),
        parameter_count=param_count(spec),
        train_loss=losses,
        test_accuracy=accs,
        final_train_loss=losses[-1],
        final_test_accuracy=accs[-1],
        layer_kappas=report.kappas,
        mean_kappa=report.mean_kappa,
        wall_clock_seconds=time.perf_counter() - start,
        network=net,
        spectrum=report,
    )


@dataclass
class ExperimentSummary:
    config: dict
    runs: dict  # model -> list of RunResult

    def aggregate(self, model):
        runs = self.runs[model]
        loss = np.array([r.final_train_loss for r in runs])
        acc = np.array([r.final_test_accuracy for r in runs])
        kappas = np.array([r.mean_kappa for r in runs])
        ddof = 1 if len(runs) > 1 else 0
        return {
            "model": model,
            "label": MODEL_LABELS.get(model, model),
            "parameter_count": runs[0].parameter_count,
            "final_train_loss_mean": float(loss.mean()),
            "final_train_loss_std": float(loss.std(ddof=ddof)),
            "test_accuracy_mean": float(acc.mean()),
            "test_accuracy_std": float(acc.std(ddof=ddof)),
            "mean_kappa": _json_num(float(kappas.mean())),
            "seeds": [r.seed for r in runs],
        }

    def to_dict(self, include_wall_clock=True):
        return {
            "config": self.config,
            "summary": [self.aggregate(m) for m in self.runs],
            "runs": {m: [r.to_dict(include_wall_clock) for r in rs] for m, rs in self.runs.items()},
        }

    def table(self):
        header = ("Model", "Parameters", "Final training loss", "Test accuracy", "Hessian kappa")
        rows = []
        for m in self.runs:
            a = self.aggregate(m)
            kappa = a["mean_kappa"]
            rows.append((
                a["label"],
                f"{a['parameter_count']:,}",
                f"{a['final_train_loss_mean']:.4f} +- {a['final_train_loss_std']:.4f}",
                f"{100 * a['test_accuracy_mean']:.2f}% +- {100 * a['test_accuracy_std']:.2f}%",
                kappa if isinstance(kappa, str) else f"{kappa:.2e}",
            ))
        widths = [max(len(r[i]) for r in rows + [header]) for i in range(len(header))]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        lines = [fmt.format(*header).rstrip(), "  ".join("-" * w for w in widths)]
        lines += [fmt.format(*r).rstrip() for r in rows]
        return "\n".join(lines) + "\n"


def _run_one(args):
    name, split, cfg, seed = args
    return train_model(ARCHITECTURES[name](), split, cfg, seed, model_name=name)


def run_experiment(dataset, cfg=TrainingConfig(), models=("dense", "cd_b4", "cd_b8"),
                   split_seed=0, jobs=1):
    """Train every model on every seed of ``cfg`` over one shared split."""
    split = split_deterministic(dataset, 1437, split_seed)
    split.train_x = normalize(split.train_x)
    split.test_x = normalize(split.test_x)
    tasks = [(m, split, cfg, s) for m in models for s in cfg.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    runs = {m: [] for m in models}
    for r in results:
        runs[r.model].append(r)
    config = cfg.to_dict()
    config.update({"split_seed": split_seed, "train_n": 1437,
                   "test_n": int(split.test_x.shape[0]), "models": list(models)})
    return ExperimentSummary(config, runs)
