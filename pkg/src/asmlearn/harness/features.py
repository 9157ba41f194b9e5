"""Feature extractors for the MNIST comparison.

Assembly extractors train small brain areas on a handful of images per digit
and then use the cap each image evokes (from rest, fiber input only) as a
binary feature vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dynamics import k_cap_rows
from ..graph import ConfigError, ModelConfig, make_area, make_rng, sample_fiber
from ..learning import TrainedModel, apply_homeostasis, train_phase

KINDS = ("identity", "linear", "nonlinear", "large-area", "random-areas", "split-areas")
PIXELS = 784


@dataclass
class FeatureExtractor:
    kind: str
    m: int
    p: float = 0.1
    beta: float = 1.0
    per_class: int = 5
    penalty: float = 10.0
    linear_std: float = 0.1
    nonlinear_prob: float = 0.2
    nonlinear_threshold: float = 70 * 0.2
    homeostasis_scope: str = "joint"
    areas: list = field(default_factory=list, repr=False)
    projection: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown extractor {self.kind!r}; choose from {KINDS}")
        if self.m <= 0:
            raise ConfigError("feature count must be positive")
        need = {"large-area": 10, "random-areas": 100, "split-areas": 100}.get(self.kind)
        if need and self.m % need:
            raise ConfigError(f"{self.kind} needs m divisible by {need}, got {self.m}")

    @property
    def dim(self):
        return PIXELS if self.kind == "identity" else self.m


def _class_examples(images, labels, per_class, rng, classes=range(10)):
    out = {}
    for c in classes:
        idx = np.flatnonzero(labels == c)
        if idx.size < per_class:
            raise ConfigError(f"only {idx.size} training images of digit {c}, need {per_class}")
        out[c] = images[np.sort(rng.choice(idx, size=per_class, replace=False))]
    return out


def _new_area_model(n, k, p, beta, rng):
    cfg = ModelConfig(n=n, k=k, p=p, beta=beta, seed=0)
    area = make_area(cfg, rng)
    fiber = sample_fiber(PIXELS, n, p, rng)
    return TrainedModel(config=cfg, area=area, fiber=fiber)


def _train_multiclass_area(model, examples, order, beta, penalty, scope):
    """Present each digit's examples in ``order``; earlier winners are pushed out of later caps."""
    fired_before = np.zeros(model.area.n, dtype=bool)
    for c in order:
        stack = list(examples[c])
        penalized = fired_before.copy()

        def bias(si, penalized=penalized):
            return -penalty * max(float(si.max()), 0.0) * penalized

        rec = train_phase(model, lambda: stack.pop(0), len(examples[c]), beta, plastic=True,
                          bias=bias, label=c)
        model.assemblies.append(rec)
        fired_before[rec.support] = True
        apply_homeostasis(model, scope)


def fit(extractor: FeatureExtractor, images, labels, rng) -> FeatureExtractor:
    """Draw random weights / train the areas of an extractor."""
    images = np.asarray(images, dtype=np.float64)
    kind, m = extractor.kind, extractor.m
    extractor.areas = []
    if kind == "linear":
        extractor.projection = rng.normal(0.0, extractor.linear_std, size=(PIXELS, m))
    elif kind == "nonlinear":
        extractor.projection = (rng.random((PIXELS, m)) < extractor.nonlinear_prob).astype(np.float64)
    elif kind == "large-area":
        model = _new_area_model(m, m // 10, extractor.p, extractor.beta, rng)
        ex = _class_examples(images, labels, extractor.per_class, rng)
        _train_multiclass_area(model, ex, range(10), extractor.beta, extractor.penalty,
                               extractor.homeostasis_scope)
        extractor.areas = [model]
    elif kind == "random-areas":
        for _ in range(m // 100):
            model = _new_area_model(100, 10, extractor.p, extractor.beta, rng)
            ex = _class_examples(images, labels, extractor.per_class, rng)
            _train_multiclass_area(model, ex, rng.permutation(10), extractor.beta,
                                   extractor.penalty, extractor.homeostasis_scope)
            extractor.areas.append(model)
    elif kind == "split-areas":
        ex = _class_examples(images, labels, extractor.per_class, rng)
        for c in range(10):
            model = _new_area_model(m // 10, m // 100, extractor.p, extractor.beta, rng)
            stack = list(ex[c])
            model.assemblies.append(
                train_phase(model, lambda: stack.pop(0), len(ex[c]), extractor.beta, plastic=True, label=c))
            apply_homeostasis(model, extractor.homeostasis_scope)
            extractor.areas.append(model)
    return extractor


def extract_features(extractor: FeatureExtractor, images, batch=2048) -> np.ndarray:
    """Feature matrix for ``images`` (rows in [0, 1]^784) from a fitted extractor."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 2 or images.shape[1] != PIXELS:
        raise ValueError(f"images must have shape (N, {PIXELS})")
    kind = extractor.kind
    if kind == "identity":
        return images.copy()
    if kind == "linear":
        return images @ extractor.projection
    if kind == "nonlinear":
        return (images @ extractor.projection > extractor.nonlinear_threshold).astype(np.float32)
    if not extractor.areas:
        raise ConfigError(f"{kind} extractor has not been fitted")
    blocks = []
    for model in extractor.areas:
        n, k = model.area.n, model.area.k
        block = np.zeros((images.shape[0], n), dtype=np.float32)
        for lo in range(0, images.shape[0], batch):
            si = model.fiber.weights.drive(images[lo:lo + batch])
            caps = k_cap_rows(si, k)
            np.put_along_axis(block[lo:lo + batch], caps, 1.0, axis=1)
        blocks.append(block)
    return np.concatenate(blocks, axis=1)


def make_extractor(kind, m, rng, images, labels, **params) -> FeatureExtractor:
    return fit(FeatureExtractor(kind=kind, m=m, **params), images, labels, rng)


def extractor_rng(seed, kind, m):
    return make_rng(seed, f"features/{kind}/{m}")
