"""End-to-end acceptance criteria, each at its stated tolerance.

A one-line PASS/FAIL summary per criterion is printed at the end of the
session by ``conftest.py``.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from cdnet.data import load_digits_csv, normalize, split_deterministic
from cdnet.diagnostics import verify_condition_bound, verify_theorem1
from cdnet.gradcheck import DEFAULT_CONFIGS, run_grad_checks
from cdnet.network import ARCHITECTURES, param_count
from cdnet.regularization import ALPHA_CD, ShannonDropoutConfig, shannon_dropout
from cdnet.spectral import dft, fft
from cdnet.training import TrainingConfig, run_experiment, train_model

pytestmark = pytest.mark.acceptance

DATA = Path(__file__).resolve().parents[1] / "data" / "digits.csv"


def note(record_property, text):
    print(text)
    record_property("summary", text)


@pytest.fixture(scope="module")
def dataset():
    if not DATA.exists():
        pytest.fail("data/digits.csv missing; run scripts/fetch_digits.py")
    return load_digits_csv(DATA)


@pytest.fixture(scope="module")
def experiment(dataset):
    start = time.perf_counter()
    summary = run_experiment(dataset, TrainingConfig(), jobs=3)
    return summary, time.perf_counter() - start


def test_criterion_1_gradient_checks(record_property):
    start = time.perf_counter()
    results = run_grad_checks(DEFAULT_CONFIGS, tolerance=1e-4, n_coords=20)
    elapsed = time.perf_counter() - start
    worst = max(r.max_rel_error for r in results)
    names = {r.name for r in results}
    note(record_property, f"{len(results)} checks over {len(DEFAULT_CONFIGS)} configs, "
                          f"max rel err {worst:.2e}, {elapsed:.2f}s")
    assert len(DEFAULT_CONFIGS) >= 3
    assert {"cdlinear.coeffs", "cdlinear.bias", "cdlinear.input", "dense.weight", "dense.bias",
            "dense.input", "relu.input", "mse.input", "fisher.coeffs"} <= names
    assert all(r.passed for r in results)
    assert worst < 1e-4
    assert elapsed < 10.0


def test_criterion_2_closed_form_hessian(record_property):
    start = time.perf_counter()
    worst = verify_theorem1(block_sizes=(2, 3, 4, 8), trials=10)
    elapsed = time.perf_counter() - start
    note(record_property, f"explicit {worst['explicit']:.1e}, finite-difference "
                          f"{worst['finite_difference']:.1e}, circulant {worst['circulant']:.1e}, "
                          f"{elapsed:.2f}s")
    assert worst["explicit"] <= 1e-8
    assert worst["finite_difference"] <= 1e-4
    assert worst["circulant"] <= 1e-12
    assert elapsed < 5.0


def test_criterion_3_condition_bound(record_property):
    start = time.perf_counter()
    rep = verify_condition_bound(4, (100, 1000, 10000), trials=100, constant=5.0, whiten=True)
    elapsed = time.perf_counter() - start
    fractions = {n: rep.pass_fraction(n) for n in rep.sample_sizes}
    note(record_property, "pass fractions " + ", ".join(f"N={n}: {f:.2f}" for n, f in fractions.items())
         + f"; population kappa {rep.population_kappa!r}; {elapsed:.2f}s")
    assert all(f >= 0.95 for f in fractions.values())
    assert rep.population_kappa == 1.0
    assert elapsed < 30.0


def test_criterion_4_parameter_counts(record_property):
    counts = {name: param_count(make()) for name, make in ARCHITECTURES.items()}
    note(record_property, ", ".join(f"{k} {v}" for k, v in counts.items()))
    assert counts == {"dense": 8970, "cd_b4": 2380, "cd_b8": 1296}


def test_criterion_5_table_accuracy(experiment, record_property):
    summary, elapsed = experiment
    acc = {m: summary.aggregate(m)["test_accuracy_mean"] for m in summary.runs}
    note(record_property, ", ".join(f"{m} {100 * a:.2f}%" for m, a in acc.items())
         + f"; {elapsed:.0f}s for 9 runs")
    assert all(len(r) == 3 and all(len(x.test_accuracy) == 25 for x in r) for r in summary.runs.values())
    assert acc["dense"] >= 0.970
    assert acc["cd_b4"] >= 0.965
    assert acc["cd_b8"] >= 0.940
    assert elapsed <= 600.0


def test_criterion_6_conditioning_ordering(experiment, record_property):
    summary, _ = experiment
    kappa = {m: float(np.mean([r.mean_kappa for r in runs])) for m, runs in summary.runs.items()}
    ratio = kappa["dense"] / kappa["cd_b4"] if kappa["cd_b4"] else math.inf
    per_seed = {m: [f"{r.mean_kappa:.3g}" for r in runs] for m, runs in summary.runs.items()}
    note(record_property, f"mean kappa dense {kappa['dense']:.3g}, cd_b4 {kappa['cd_b4']:.3g}, "
                          f"cd_b8 {kappa['cd_b8']:.3g}; ratio {ratio:.3g}; per seed {per_seed}")
    assert ratio >= 50.0
    assert kappa["dense"] > kappa["cd_b4"] > kappa["cd_b8"]


def test_criterion_7_spectral_core(record_property):
    rng = np.random.default_rng(0)
    worst_fft, worst_parseval = 0.0, 0.0
    for i in range(1000):
        b = 1 + i % 16
        x = rng.normal(size=b)
        ref = dft(x)
        worst_fft = max(worst_fft, np.max(np.abs(fft(x) - ref)) / np.max(np.abs(ref)))
        energy = b * np.sum(x * x)
        worst_parseval = max(worst_parseval, abs(np.sum(np.abs(fft(x)) ** 2) - energy) / energy)
    note(record_property, f"fft vs dft {worst_fft:.1e}, Parseval {worst_parseval:.1e} "
                          f"over 1000 vectors, B in 1..16")
    assert worst_fft <= 1e-10
    assert worst_parseval <= 1e-10


def test_criterion_8_dropout_statistics(record_property):
    rng = np.random.default_rng(0)
    cfg = ShannonDropoutConfig(rate=ALPHA_CD, enabled=True)
    x = rng.uniform(0.0, 2.0, size=10**6)
    out, mask = shannon_dropout(x, cfg, True, rng)
    rate = 1.0 - mask.mean()
    se = out.std(ddof=1) / math.sqrt(out.size)
    z = (out.mean() - x.mean()) / se
    note(record_property, f"drop rate {rate:.5f} (target 0.0118 +- 0.0005), mean shift {z:+.2f} SE")
    assert abs(rate - 0.0118) <= 0.0005
    assert abs(z) <= 4.0


def test_criterion_9_determinism(dataset, experiment, record_property):
    summary, _ = experiment
    split = split_deterministic(dataset, 1437, 0)
    split.train_x, split.test_x = normalize(split.train_x), normalize(split.test_x)
    cfg = TrainingConfig(seeds=(0,))
    same = []
    for model in summary.runs:
        again = train_model(ARCHITECTURES[model](), split, cfg, 0, model_name=model)
        first = summary.runs[model][0]
        same.append(json.dumps(first.to_dict(False)) == json.dumps(again.to_dict(False)))
    note(record_property, f"rerun of seed 0 bit-identical for {sum(same)}/{len(same)} models "
                          "(one run in a worker process, one in-process)")
    assert all(same)
