"""Trial execution, sweeps, the MNIST pipeline and output files.

Every trial gets its own seed, derived from the config seed and the trial
index, so grid points share seeds (common random numbers) and results do not
depend on how trials are scheduled across worker processes.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..graph import ConfigError, derive_seed, make_rng
from ..learning import accuracy, build_model, classify_halfspace, classify_overlap, train_classes
from ..stimuli import (load_mnist, make_halfspace_class, make_stimulus_classes, mnist_paths,
                       sample_halfspace, sample_stimulus, stratified_limit)
from .config import INT_PARAMS, ExperimentConfig
from .features import extract_features, extractor_rng, make_extractor
from .readout import train_linear_readout

log = logging.getLogger(__name__)

CSV_HEADER = ["param", "value", "trial", "seed", "accuracy", "support", "converge_step"]
SUMMARY_HEADER = ["param", "value", "trials", "failed", "mean", "min", "max"]


@dataclass
class TrialMetrics:
    param: str
    value: object
    trial: int
    seed: int
    accuracy: float = float("nan")
    support_sizes: list = field(default_factory=list)
    assembly_overlaps: list = field(default_factory=list)
    converge_steps: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    error: str | None = None
    # measured but never written to files, which must be byte-reproducible
    wall_time: float = 0.0

    @property
    def support(self):
        return float(np.mean(self.support_sizes)) if self.support_sizes else float("nan")

    @property
    def converge_step(self):
        """Latest convergence step over classes; None if any class never converged."""
        if not self.converge_steps or any(s is None for s in self.converge_steps):
            return None
        return max(self.converge_steps)

    def to_dict(self):
        d = asdict(self)
        d.pop("wall_time")
        return d


def fmt(x):
    """Six significant digits; integers as integers, missing values empty."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if x.is_integer() and abs(x) < 1e15:
            return str(int(x))
        return f"{x:.6g}"
    return str(x)


def round6(obj):
    """Recursively round floats to six significant digits for JSON output."""
    if isinstance(obj, dict):
        return {str(k): round6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round6(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return round6(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.6g}")
    return obj


# --- single trials ------------------------------------------------------------

def _trial_seed(master, trial):
    return derive_seed(master, f"trial/{trial}")


def _apply_param(cfg: ExperimentConfig, param, value):
    """Copy of cfg with one swept parameter set."""
    d = cfg.to_dict()
    if param is None:
        return ExperimentConfig.from_dict(d)
    v = int(round(value)) if param in INT_PARAMS else float(value)
    if param in ("n", "k", "p", "beta"):
        d["model"][param] = v
        if param == "n" and d["sweep"]["tie_k"]:
            d["model"]["k"] = max(1, v // 10)
    elif param == "T":
        d["train"]["T"] = v
    elif param in ("r", "q", "alpha"):
        d["stimulus"][param] = v
    elif param == "delta":
        d["halfspace"]["delta"] = v
    return ExperimentConfig.from_dict(d)


def _summarize_model(metrics: TrialMetrics, model):
    metrics.support_sizes = [int(a.support.size) for a in model.assemblies]
    metrics.converge_steps = [a.converged_at for a in model.assemblies]
    metrics.assembly_overlaps = [[int(np.intersect1d(a.core_estimate, b.core_estimate).size)
                                  for b in model.assemblies] for a in model.assemblies]


def stimulus_trial(cfg: ExperimentConfig, seed, metrics: TrialMetrics):
    st = cfg["stimulus"]
    mc = cfg.model_config(seed=seed)
    model = build_model(mc)
    classes = make_stimulus_classes(st["classes"], mc.k, mc.n, st["r"], st["q"],
                                    make_rng(seed, "stimuli"), alpha=st["alpha"])
    train_classes(model, classes, cfg.train_config(), make_rng(seed, "train"))
    test_rng = make_rng(seed, "test")
    x = np.concatenate([sample_stimulus(c, test_rng, st["num_test"]) for c in classes])
    y = np.repeat(np.arange(len(classes)), st["num_test"])
    pred = classify_overlap(model, x)
    metrics.accuracy = accuracy(pred.labels, y)
    metrics.extra["ambiguous"] = int(pred.ambiguous.sum())
    _summarize_model(metrics, model)
    return model


def halfspace_trial(cfg: ExperimentConfig, seed, metrics: TrialMetrics):
    hs_cfg = cfg["halfspace"]
    mc = cfg.model_config(seed=seed)
    model = build_model(mc)
    hs = make_halfspace_class(mc.n, mc.k, hs_cfg["delta"], support=hs_cfg["support"],
                              rng=make_rng(seed, "stimuli"), allow_signed=hs_cfg["allow_signed"],
                              warn=False)
    train_classes(model, hs, cfg.train_config(), make_rng(seed, "train"))
    test_rng = make_rng(seed, "test")
    half = hs_cfg["num_test"] // 2
    x = np.concatenate([sample_halfspace(hs, True, test_rng, half),
                        sample_halfspace(hs, False, test_rng, half)])
    y = np.repeat([True, False], half)
    pred = classify_halfspace(model, x, hs_cfg["threshold"])
    metrics.accuracy = accuracy(pred, y)
    metrics.extra["true_positive_rate"] = float(pred[:half].mean())
    metrics.extra["false_positive_rate"] = float(pred[half:].mean())
    _summarize_model(metrics, model)
    return model


TRIAL_KINDS = {"stimulus": stimulus_trial, "four-class": stimulus_trial, "halfspace": halfspace_trial}


def run_trial(cfg_dict, param, value, trial) -> TrialMetrics:
    """One trial; failures are captured in the ``error`` field, never raised."""
    cfg = ExperimentConfig.from_dict(cfg_dict)
    seed = _trial_seed(cfg.seed, trial)
    metrics = TrialMetrics(param=param, value=value, trial=trial, seed=seed)
    t0 = time.perf_counter()
    try:
        point = _apply_param(cfg, param if cfg.kind == "sweep" else None, value)
        base = cfg.sweep_base() if cfg.kind == "sweep" else cfg.kind
        TRIAL_KINDS[base](point, seed, metrics)
    except Exception as exc:  # recorded per trial; the run carries on
        metrics.error = f"{type(exc).__name__}: {exc}"
        log.debug("trial %d failed:\n%s", trial, traceback.format_exc())
    metrics.wall_time = time.perf_counter() - t0
    return metrics


# --- MNIST ----------------------------------------------------------------------

def load_mnist_split(mn, split, limit):
    images, labels = mnist_paths(mn["data_dir"], split)
    if not images.exists() and not Path(str(images) + ".gz").exists():
        raise ConfigError(f"MNIST {split} images not found at {images}")
    x, y = load_mnist(images, labels, binarize=mn["binarize"])
    keep = stratified_limit(y, limit)
    return x[keep], y[keep]


def run_mnist(cfg: ExperimentConfig) -> list:
    mn = cfg["mnist"]
    xtr, ytr = load_mnist_split(mn, "train", mn["limit"])
    test_limit = mn["test_limit"] if mn["test_limit"] is not None else mn["limit"]
    xte, yte = load_mnist_split(mn, "test", test_limit)
    out = []
    for kind in mn["extractors"]:
        seed = derive_seed(cfg.seed, f"mnist/{kind}")
        metrics = TrialMetrics(param="extractor", value=kind, trial=0, seed=seed)
        t0 = time.perf_counter()
        try:
            params = {} if kind in ("identity", "linear", "nonlinear") else dict(
                p=mn["p"], beta=mn["beta"], per_class=mn["per_class"], penalty=mn["penalty"],
                homeostasis_scope=cfg["train"]["homeostasis_scope"])
            ex = make_extractor(kind, mn["m"], extractor_rng(seed, kind, mn["m"]), xtr, ytr, **params)
            ftr, fte = extract_features(ex, xtr), extract_features(ex, xte)
            ro = train_linear_readout(ftr, ytr, make_rng(seed, "readout"), epochs=mn["epochs"],
                                      learning_rate=mn["lr"], batch_size=mn["batch"], n_classes=10)
            metrics.accuracy = ro.accuracy(fte, yte)
            metrics.extra = {"train_accuracy": ro.accuracy(ftr, ytr), "features": int(ftr.shape[1]),
                             "train_examples": int(len(ytr)), "test_examples": int(len(yte)),
                             "final_loss": ro.losses[-1]}
        except ConfigError:
            raise
        except Exception as exc:
            metrics.error = f"{type(exc).__name__}: {exc}"
            log.debug("extractor %s failed:\n%s", kind, traceback.format_exc())
        metrics.wall_time = time.perf_counter() - t0
        log.info("%s: test accuracy %s (%.1fs)", kind, fmt(metrics.accuracy), metrics.wall_time)
        out.append(metrics)
    return out


# --- orchestration ----------------------------------------------------------------

def trial_plan(cfg: ExperimentConfig):
    if cfg.kind == "sweep":
        param = cfg["sweep"]["param"]
        return [(param, v, t) for v in cfg.sweep_grid() for t in range(cfg.trials)]
    param, value = {"halfspace": ("delta", cfg["halfspace"]["delta"])}.get(
        cfg.kind, ("classes", cfg["stimulus"]["classes"]))
    return [(param, value, t) for t in range(cfg.trials)]


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers=1) -> list:
    """Run every trial of ``cfg``; write CSV and JSON to ``out_dir`` if given."""
    cfg.validate()
    if cfg.kind == "mnist":
        results = run_mnist(cfg)
    else:
        plan = trial_plan(cfg)
        d = cfg.to_dict()
        if workers > 1 and len(plan) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(run_trial, d, *job) for job in plan]
                results = [f.result() for f in futures]
        else:
            results = [run_trial(d, *job) for job in plan]
        order = {v: i for i, v in enumerate(dict.fromkeys(p[1] for p in plan))}
        results.sort(key=lambda m: (order[m.value], m.seed))
    if out_dir is not None:
        write_outputs(cfg, results, out_dir)
    return results


def summarize(results) -> list:
    groups = {}
    for m in results:
        groups.setdefault((m.param, m.value), []).append(m)
    rows = []
    for (param, value), ms in groups.items():
        acc = [m.accuracy for m in ms if m.error is None]
        rows.append({"param": param, "value": value, "trials": len(ms), "failed": len(ms) - len(acc),
                     "mean": float(np.mean(acc)) if acc else float("nan"),
                     "min": float(np.min(acc)) if acc else float("nan"),
                     "max": float(np.max(acc)) if acc else float("nan")})
    return rows


def _config_comment(cfg):
    return f"# config: {cfg.to_json()}\n# seed: {cfg.seed}\n"


def csv_text(cfg, results) -> str:
    buf = io.StringIO()
    buf.write(_config_comment(cfg))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for m in results:
        w.writerow([m.param, fmt(m.value), m.trial, m.seed,
                    "" if m.error else fmt(m.accuracy), fmt(m.support), fmt(m.converge_step)])
    return buf.getvalue()


def summary_text(cfg, results) -> str:
    buf = io.StringIO()
    buf.write(_config_comment(cfg))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for row in summarize(results):
        w.writerow([fmt(row[h]) for h in SUMMARY_HEADER])
    return buf.getvalue()


def json_document(cfg, results, extra=None) -> dict:
    doc = {"command": cfg.kind, "seed": cfg.seed, "config": cfg.to_dict(),
           "summary": summarize(results), "trials": [m.to_dict() for m in results]}
    if extra:
        doc.update(extra)
    return round6(doc)


def dump_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def output_paths(out_dir, kind):
    out = Path(out_dir)
    return {"csv": out / f"{kind}.csv", "summary": out / f"{kind}_summary.csv", "json": out / f"{kind}.json"}


def write_outputs(cfg, results, out_dir):
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    paths = output_paths(out_dir, cfg.kind)
    # single writer: all files are produced here, after every trial has finished
    paths["csv"].write_text(csv_text(cfg, results))
    paths["summary"].write_text(summary_text(cfg, results))
    paths["json"].write_text(dump_json(json_document(cfg, results)))
    return paths
