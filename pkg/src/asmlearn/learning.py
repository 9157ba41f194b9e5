"""Training by consecutive presentation, assembly extraction, and classifiers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import (ConvergenceTrace, StepInput, area_step, disinhibit, inhibit,
                       k_cap, k_cap_rows, reset_phase)
from .graph import Area, ConfigError, Fiber, ModelConfig, make_area, make_rng, renormalize_incoming, sample_fiber
from .stimuli import HalfspaceClass, StimulusClass, sample_halfspace, sample_stimulus

HOMEOSTASIS_SCOPES = ("fiber", "joint", "separate")


@dataclass
class TrainConfig:
    T: int = 5
    beta: float = 0.1
    homeostasis_between_classes: bool = True
    plastic: bool = True
    # which incoming weights are renormalized together: fiber only, fiber and
    # recurrent jointly, or each set on its own
    homeostasis_scope: str = "joint"

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise ConfigError(f"T must be a positive integer, got {self.T}")
        if self.beta < 0:
            raise ConfigError("beta must be nonnegative")
        if self.homeostasis_scope not in HOMEOSTASIS_SCOPES:
            raise ConfigError(f"homeostasis_scope must be one of {HOMEOSTASIS_SCOPES}")

    def to_dict(self):
        return {"T": int(self.T), "beta": float(self.beta),
                "homeostasis_between_classes": bool(self.homeostasis_between_classes),
                "plastic": bool(self.plastic), "homeostasis_scope": self.homeostasis_scope}


@dataclass
class AssemblyRecord:
    label: int
    core_estimate: np.ndarray
    support: np.ndarray
    gamma_measured: float | None = None
    trace: ConvergenceTrace = field(default_factory=ConvergenceTrace)
    caps: list = field(default_factory=list)

    @property
    def converged_at(self):
        return self.trace.converged_at()

    def to_dict(self):
        return {"label": int(self.label),
                "core_estimate": [int(i) for i in self.core_estimate],
                "support": [int(i) for i in self.support],
                "gamma_measured": self.gamma_measured,
                "first_timers": list(self.trace.first_timers)}


@dataclass
class TrainedModel:
    config: ModelConfig
    area: Area
    fiber: Fiber
    assemblies: list = field(default_factory=list)
    train: TrainConfig | None = None
    homeostasis_applied: bool = False

    @property
    def n_sensory(self):
        return self.fiber.n_src

    def assembly(self, label):
        for a in self.assemblies:
            if a.label == label:
                return a
        raise KeyError(label)


def build_model(config: ModelConfig, n_sensory=None) -> TrainedModel:
    """Fresh untrained area plus sensory fiber, both drawn from the "graph" stream."""
    rng = make_rng(config.seed, "graph")
    area = make_area(config, rng)
    fiber = sample_fiber(config.n if n_sensory is None else n_sensory, config.n, config.p, rng)
    return TrainedModel(config=config, area=area, fiber=fiber)


def apply_homeostasis(model: TrainedModel, scope="joint"):
    if scope == "fiber":
        renormalize_incoming(model.fiber.weights)
    elif scope == "joint":
        renormalize_incoming(model.fiber.weights, model.area.recurrent)
    elif scope == "separate":
        renormalize_incoming(model.fiber.weights)
        renormalize_incoming(model.area.recurrent)
    else:
        raise ConfigError(f"unknown homeostasis scope {scope!r}")
    model.homeostasis_applied = True


def train_phase(model: TrainedModel, draw: Callable[[], np.ndarray], T, beta, plastic=True,
                bias=None, label=0) -> AssemblyRecord:
    """Present T samples from one label-free stream; the area ends at rest.

    ``draw`` returns one sensory activation vector per call and never sees a
    label: grouping samples into a phase is the only supervision.
    """
    area = model.area
    reset_phase(area)
    disinhibit(area)
    trace = ConvergenceTrace()
    caps = []
    support = np.zeros(area.n, dtype=bool)
    for _ in range(T):
        report = area_step(StepInput(draw(), model.fiber, area), beta, plastic=plastic, bias=bias)
        trace.record(report)
        caps.append(report.cap)
        support[report.cap] = True
    record = AssemblyRecord(label=label, core_estimate=caps[-1].copy(),
                            support=np.flatnonzero(support), trace=trace, caps=caps)
    inhibit(area)
    return record


def train_classes(model: TrainedModel, classes, train_cfg: TrainConfig, rng) -> TrainedModel:
    """Form one assembly per class, presenting each class's samples consecutively.

    ``classes`` is a sequence of StimulusClass, or a single HalfspaceClass (in
    which case only positive examples are shown and one assembly results).
    Labels are the class positions 0..c-1.
    """
    model.train = train_cfg
    if isinstance(classes, HalfspaceClass):
        phases = [lambda hs=classes: sample_halfspace(hs, True, rng)]
    else:
        classes = list(classes)
        if not classes:
            raise ConfigError("no classes to train")
        phases = [lambda c=c: sample_stimulus(c, rng) for c in classes]
    for label, draw in enumerate(phases):
        record = train_phase(model, draw, train_cfg.T, train_cfg.beta,
                             plastic=train_cfg.plastic, label=label)
        model.assemblies.append(record)
        if train_cfg.homeostasis_between_classes:
            apply_homeostasis(model, train_cfg.homeostasis_scope)
    return model


def test_caps(model: TrainedModel, examples) -> np.ndarray:
    """Caps evoked from rest (fiber input only, no plasticity); one row per example."""
    x = np.atleast_2d(np.asarray(examples, dtype=np.float64))
    si = model.fiber.weights.drive(x)
    return k_cap_rows(si, model.area.k)


def core_overlaps(model: TrainedModel, caps) -> np.ndarray:
    """|cap ∩ core| for every (example, assembly) pair."""
    member = np.zeros((len(model.assemblies), model.area.n), dtype=bool)
    for a, rec in enumerate(model.assemblies):
        member[a, rec.core_estimate] = True
    caps = np.atleast_2d(caps)
    return member[:, caps].sum(axis=2).T


@dataclass
class Prediction:
    labels: np.ndarray
    ambiguous: np.ndarray
    overlaps: np.ndarray


def classify_overlap(model: TrainedModel, examples) -> Prediction:
    """Label of the assembly with the most neurons in the evoked cap (ties: lowest label)."""
    if not model.assemblies:
        raise ConfigError("no assemblies trained")
    ov = core_overlaps(model, test_caps(model, examples))
    labels = np.array([a.label for a in model.assemblies])
    best = ov.argmax(axis=1)
    top = ov.max(axis=1, keepdims=True)
    ambiguous = (ov == top).sum(axis=1) > 1
    return Prediction(labels=labels[best], ambiguous=ambiguous, overlaps=ov)


def classify_halfspace(model: TrainedModel, examples, epsilon_threshold=0.5) -> np.ndarray:
    """True where the evoked cap contains at least epsilon_threshold * k assembly neurons."""
    if not model.assemblies:
        raise ConfigError("no halfspace assembly trained")
    ov = core_overlaps(model, test_caps(model, examples))[:, 0]
    return ov >= epsilon_threshold * model.area.k


def accuracy(pred, truth):
    pred, truth = np.asarray(pred), np.asarray(truth)
    return float((pred == truth).mean()) if truth.size else float("nan")


# --- readout area -----------------------------------------------------------

@dataclass
class Readout:
    area: Area
    fiber: Fiber
    assemblies: list = field(default_factory=list)


def add_readout(model: TrainedModel, n=None, k=None, p=None, seed_label="readout") -> Readout:
    cfg = model.config
    rng = make_rng(cfg.seed, seed_label)
    n = cfg.n if n is None else n
    k = cfg.k if k is None else k
    p = cfg.p if p is None else p
    area = make_area(ModelConfig(n=n, k=k, p=p, beta=cfg.beta, seed=cfg.seed), rng)
    fiber = sample_fiber(model.area.n, n, p, rng)
    return Readout(area=area, fiber=fiber)


def project_to_readout(model: TrainedModel, readout: Readout, assembly: AssemblyRecord,
                       rounds, beta=None, homeostasis=True) -> AssemblyRecord:
    """Fire the assembly's core into the readout area for ``rounds`` plastic steps.

    As between training classes, the readout's incoming weights are
    renormalized afterwards so one projection does not swamp the next.
    Non-convergence is reported through ``converged_at`` being None, not raised.
    """
    if rounds < 1:
        raise ConfigError("rounds must be >= 1")
    beta = model.config.beta if beta is None else beta
    x = np.zeros(model.area.n)
    x[assembly.core_estimate] = 1.0
    inner = TrainedModel(config=model.config, area=readout.area, fiber=readout.fiber)
    rec = train_phase(inner, lambda: x, rounds, beta, plastic=True, label=assembly.label)
    if homeostasis:
        renormalize_incoming(readout.fiber.weights, readout.area.recurrent)
    readout.assemblies.append(rec)
    return rec


def readout_response(readout: Readout, learning_caps) -> np.ndarray:
    """Readout caps (from rest) for learning-area caps given as index rows."""
    caps = np.atleast_2d(learning_caps)
    x = np.zeros((caps.shape[0], readout.fiber.n_src))
    np.put_along_axis(x, caps, 1.0, axis=1)
    return k_cap_rows(readout.fiber.weights.drive(x), readout.area.k)


def classify_via_readout(model: TrainedModel, readout: Readout, examples) -> np.ndarray:
    caps = readout_response(readout, test_caps(model, examples))
    member = np.zeros((len(readout.assemblies), readout.area.n), dtype=bool)
    for a, rec in enumerate(readout.assemblies):
        member[a, rec.core_estimate] = True
    ov = member[:, caps].sum(axis=2).T
    labels = np.array([a.label for a in readout.assemblies])
    return labels[ov.argmax(axis=1)]


def frozen_cap(model: TrainedModel, x, previous=None) -> np.ndarray:
    """Single non-plastic cap from the fiber and an optional previous firing set."""
    si = model.fiber.weights.drive(x)
    if previous is not None and len(previous):
        si = si + model.area.recurrent.drive_from(previous)
    return k_cap(si, model.area.k)
