"""End-to-end acceptance checks, one test per criterion.

Each test prints a single "CRITERION n: PASS/FAIL ..." line with the measured
numbers and then asserts at the stated tolerance.  Nothing is loosened to make
a red criterion green.
"""
import json
import os
import time

import numpy as np
import pytest

from asmlearn.analysis import (beta0, halfspace_margin_requirement, recall_defect_bound,
                               support_bound)
from asmlearn.graph import ModelConfig, make_rng
from asmlearn.harness.cli import main as cli
from asmlearn.harness.config import ExperimentConfig
from asmlearn.harness.experiments import run_experiment, summarize
from asmlearn.harness.readout import loss_and_grad
from asmlearn.learning import TrainConfig, build_model, test_caps as evoked_caps, train_classes
from asmlearn.stimuli import make_stimulus_classes, sample_stimulus, read_idx_labels, mnist_paths

from .oracles import bounds_oracle as oracle

SEEDS = 20
DESK = dict(n=1000, k=100, p=0.1)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
            print(f"\nCRITERION {n}: {status} {detail}")
    return emit


def _run(kind, trials=SEEDS, **over):
    cfg = ExperimentConfig.resolve(kind, overrides={"run.trials": trials, **over})
    return cfg, run_experiment(cfg)


def _accs(results):
    return np.array([m.accuracy if m.error is None else np.nan for m in results])


def _rises_to_one(means, inversion=0.05):
    """Non-decreasing up to one dip of at most ``inversion``, ending at 1.0."""
    drops = [a - b for a, b in zip(means, means[1:]) if b < a]
    return means[-1] == 1.0 and len(drops) <= 1 and all(d <= inversion for d in drops)


def test_criterion_1_two_class(report):
    t0 = time.perf_counter()
    _, res = _run("stimulus", **{"model.beta": 0.1, "train.T": 5, "stimulus.num_test": 100})
    wall = time.perf_counter() - t0
    acc = _accs(res)
    perfect = int((acc == 1.0).sum())
    ok = perfect >= 19 and wall < 60
    report(1, ok, f"two-class accuracy 1.0 in {perfect}/{SEEDS} seeds (need 19), "
                  f"min {np.nanmin(acc):.3f}, runtime {wall:.1f}s (need < 60)")
    assert ok


def test_criterion_2_halfspace(report):
    _, res = _run("halfspace", **{"halfspace.delta": 1.0, "model.beta": 1.0, "train.T": 5,
                                  "halfspace.threshold": 0.5, "halfspace.num_test": 200})
    acc = _accs(res)
    perfect = int((acc == 1.0).sum())
    tpr = np.mean([m.extra["true_positive_rate"] for m in res])
    fpr = np.mean([m.extra["false_positive_rate"] for m in res])
    ok = perfect >= 19
    report(2, ok, f"halfspace delta=1 accuracy 1.0 in {perfect}/{SEEDS} seeds (need 19), "
                  f"mean {np.nanmean(acc):.3f}, TPR {tpr:.3f}, FPR {fpr:.3f}; "
                  f"bound asks for delta >= {np.sqrt(halfspace_margin_requirement(**DESK)):.2f}")
    assert ok


def test_criterion_3_four_class(report):
    _, res = _run("four-class", **{"model.beta": 0.1})
    acc = _accs(res)
    perfect = int((acc == 1.0).sum())
    ok = perfect >= 18
    report(3, ok, f"four-class accuracy 1.0 in {perfect}/{SEEDS} seeds (need 18), min {np.nanmin(acc):.3f}")
    assert ok


def _single_class(seed, r, q):
    m = build_model(ModelConfig(beta=1.0, seed=seed, **DESK))
    cls = make_stimulus_classes(1, 100, 1000, r, q, make_rng(seed, "stimuli"))
    train_classes(m, cls, TrainConfig(T=10, beta=1.0), make_rng(seed, "train"))
    return m, cls[0]


@pytest.fixture(scope="module")
def single_class_models():
    return {(r, q): [_single_class(s, r, q) for s in range(SEEDS)] for r, q in ((1.0, 0.0), (0.9, 0.1))}


def test_criterion_4_convergence_and_support(report, single_class_models):
    limit = support_bound(1.0, beta0(1000, 100, 0.1, 0.9), 100)
    lines, ok = [], True
    for (r, q), runs in single_class_models.items():
        good = sum(a.converged_at is not None and a.converged_at <= 10 and a.support.size <= limit
                   for a in (m.assemblies[0] for m, _ in runs))
        sizes = [m.assemblies[0].support.size for m, _ in runs]
        ok &= good >= 0.9 * SEEDS
        lines.append(f"r={r}: {good}/{SEEDS} converged with support <= {limit:.1f} (max {max(sizes)})")
    report(4, ok, "; ".join(lines) + " (need 18 each)")
    assert ok


def test_criterion_5_recall(report, single_class_models):
    lines, ok = [], True
    for (r, q), runs in single_class_models.items():
        good = 0
        fracs = []
        for seed, (m, cls) in enumerate(runs):
            x = sample_stimulus(cls, make_rng(seed, "recall"))
            cap = evoked_caps(m, x)[0]
            frac = np.intersect1d(cap, m.assemblies[0].core_estimate).size / 100
            fracs.append(frac)
            good += frac >= 0.9
        ok &= good >= 0.9 * SEEDS
        lines.append(f"r={r}: {good}/{SEEDS} recalls with overlap >= 0.9 (min {min(fracs):.2f})")
    report(5, ok, "; ".join(lines) + " (need 18 each)")
    assert ok


def test_criterion_6_overlap_preservation(report):
    _, res = _run("stimulus", **{"stimulus.alpha": 0.2, "model.beta": 1.0})
    ov = np.array([m.assembly_overlaps[0][1] for m in res])
    good = int((ov <= 40).sum())
    ok = good >= 0.9 * SEEDS
    report(6, ok, f"core overlap <= 40 in {good}/{SEEDS} seeds (need 18); "
                  f"overlaps range {ov.min()}..{ov.max()}, mean {ov.mean():.1f}")
    assert ok


def _sweep_means(param, values, **over):
    _, res = _run("sweep", **{"sweep.param": param, "sweep.values": values, **over})
    return [round(row["mean"], 6) for row in summarize(res)], [row["value"] for row in summarize(res)]


def test_criterion_7_sweep_shapes(report):
    r_means, r_vals = _sweep_means("r", [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9])
    d_means, d_vals = _sweep_means("delta", [0.25, 0.5, 0.75, 1.0])
    n_means, n_vals = _sweep_means("n", [100, 200, 400, 600, 800, 1000])
    k_means, k_vals = _sweep_means("k", [5, 10, 20, 40, 60, 80, 100], **{"sweep.tie_k": False})
    parts = {"r": _rises_to_one(r_means), "delta": d_means[-1] == 1.0,
             "n": _rises_to_one(n_means), "k": _rises_to_one(k_means)}
    ok = all(parts.values())
    fmt = lambda vals, means: " ".join(f"{v:g}:{m:.3f}" for v, m in zip(vals, means))  # noqa: E731
    report(7, ok, f"shapes {parts}; r [{fmt(r_vals, r_means)}]; delta [{fmt(d_vals, d_means)}]; "
                  f"n [{fmt(n_vals, n_means)}]; k [{fmt(k_vals, k_means)}]")
    assert ok


def test_criterion_8_bound_calculators(report):
    b0 = beta0(1000, 100, 0.1, 0.9)
    hs = halfspace_margin_requirement(1000, 100, 0.1)
    rd = recall_defect_bound(100, 0.1, 0.9)
    checks = {
        "beta0": (abs(b0 - 0.8713) <= 0.001, b0, float(oracle.beta0(1000, 100, 0.1, 0.9))),
        "halfspace": (abs(hs - 159.7) <= 0.5, hs, float(oracle.halfspace_req(1000, 100, 0.1))),
        "recall": (abs(rd - 1.234e-4) <= 0.01 * 1.234e-4, rd, float(oracle.recall_defect(100 * 0.1 * 0.9))),
    }
    ok = all(good and np.isclose(got, ref, rtol=1e-12, atol=0) for good, got, ref in checks.values())
    report(8, ok, "; ".join(f"{k} {got:.6g} (oracle {ref:.6g})" for k, (_, got, ref) in checks.items()))
    assert ok


def test_criterion_9_cli_determinism(report, tmp_path):
    runs = {
        "train-stimulus": ["--trials", 3],
        "four-class": ["--trials", 2, "--n", 400, "--k", 40],
        "train-halfspace": ["--trials", 3],
        "sweep": ["--param", "r", "--values", "0.6,0.9", "--trials", 2, "--n", 400, "--k", 40],
        "bounds": [],
    }
    bad = []
    for cmd, extra in runs.items():
        dirs = [tmp_path / cmd / tag for tag in ("a", "b")]
        for d in dirs:
            assert cli([cmd, "--seed", "5", "--quiet", "--out", str(d), *map(str, extra)]) == 0
        names = sorted(p.name for p in dirs[0].iterdir())
        assert names == sorted(p.name for p in dirs[1].iterdir()) and names
        bad += [f"{cmd}/{n}" for n in names if (dirs[0] / n).read_bytes() != (dirs[1] / n).read_bytes()]
    ok = not bad
    report(9, ok, f"{len(runs)} commands run twice with the same seed, differing files: {bad or 'none'}")
    assert ok


def _full_mnist_dir():
    d = os.environ.get("ASMLEARN_MNIST_DIR")
    if not d:
        return None
    _, labels = mnist_paths(d, "train")
    try:
        return d if read_idx_labels(labels).size == 60000 else None
    except (OSError, ValueError):
        return None


@pytest.mark.slow
@pytest.mark.mnist_full
def test_criterion_10_mnist_full_scale(report, tmp_path):
    d = _full_mnist_dir()
    if d is None:
        report(10, None, "full scale not run: set ASMLEARN_MNIST_DIR to the 60000/10000 IDX files")
        pytest.skip("full MNIST not available")
    cfg = ExperimentConfig.resolve("mnist", overrides={"mnist.data_dir": d, "mnist.m": 10000})
    acc = {m.value: m.accuracy for m in run_experiment(cfg, tmp_path)}
    five = {k: v for k, v in acc.items() if k != "identity"}
    best = max(five, key=five.get)
    ok = (abs(acc["identity"] - 0.89) <= 0.01 and abs(acc["split-areas"] - 0.96) <= 0.015
          and best == "split-areas" and sorted(five.values())[-2] < five["split-areas"])
    report(10, ok, "full scale " + ", ".join(f"{k} {v:.4f}" for k, v in acc.items()))
    assert ok


def test_criterion_10_mnist_smoke(report, tmp_path, mnist_sample_dir):
    code = cli(["mnist", "--data-dir", str(mnist_sample_dir), "--limit", "1000", "--quiet",
                "--out", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "mnist.json").read_text())
    res = {t["value"]: t["accuracy"] for t in doc["trials"]}
    ok = res["split-areas"] > 0.70
    report("10 (smoke)", ok, "limit 1000, m=10000: " + ", ".join(f"{k} {v:.3f}" for k, v in res.items())
           + " (need split-areas > 0.70)")
    assert ok


def test_criterion_11_gradient_check(report):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(5):
        d, c, b = rng.integers(3, 12), rng.integers(2, 6), rng.integers(1, 9)
        X, y = rng.normal(size=(b, d)), rng.integers(0, c, size=b)
        W, bias = rng.normal(size=(d, c)), rng.normal(size=c)
        _, gW, gb = loss_and_grad(W, bias, X, y)
        num = np.zeros_like(W)
        h = 1e-6
        for idx in np.ndindex(W.shape):
            Wp, Wm = W.copy(), W.copy()
            Wp[idx] += h
            Wm[idx] -= h
            num[idx] = (loss_and_grad(Wp, bias, X, y)[0] - loss_and_grad(Wm, bias, X, y)[0]) / (2 * h)
        numb = np.array([(loss_and_grad(W, bias + h * e, X, y)[0] - loss_and_grad(W, bias - h * e, X, y)[0])
                         / (2 * h) for e in np.eye(c)])
        for a, n in ((gW, num), (gb, numb)):
            worst = max(worst, np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12))
    ok = worst <= 1e-5
    report(11, ok, f"worst relative gradient error {worst:.2e} (need <= 1e-5)")
    assert ok
