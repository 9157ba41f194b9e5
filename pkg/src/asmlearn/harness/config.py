"""Experiment configuration: INI files, flag overrides and the resolved record.

Precedence, lowest first: built-in defaults, per-kind defaults, the config
file, command-line flags.  The resolved config (minus output location and
worker count, which never change results) is embedded in every output file.
"""
from __future__ import annotations

import configparser
import copy
import json
from dataclasses import dataclass, field

from ..graph import ConfigError, ModelConfig
from ..learning import HOMEOSTASIS_SCOPES, TrainConfig

KINDS = ("stimulus", "halfspace", "four-class", "sweep", "mnist")
SWEEP_PARAMS = ("r", "q", "alpha", "delta", "n", "k", "p", "beta", "T")
INT_PARAMS = ("n", "k", "T")


def _opt(conv):
    def parse(v):
        if v is None or (isinstance(v, str) and v.strip().lower() in ("", "none")):
            return None
        return conv(v)
    return parse


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v):
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).replace(",", " ").split()]


def _strs(v):
    if isinstance(v, (list, tuple)):
        return [str(x) for x in v]
    return [x for x in str(v).replace(",", " ").split()]


SCHEMA = {
    "model": {"n": int, "k": int, "p": float, "beta": float, "seed": int},
    "train": {"T": int, "homeostasis_between_classes": _bool, "homeostasis_scope": str},
    "stimulus": {"classes": int, "r": float, "q": float, "alpha": _opt(float), "num_test": int},
    "halfspace": {"delta": float, "support": _opt(int), "threshold": float, "num_test": int,
                  "allow_signed": _bool},
    "sweep": {"param": _opt(str), "from": _opt(float), "to": _opt(float), "steps": int,
              "values": _opt(_floats), "base": str, "tie_k": _bool},
    "mnist": {"extractors": _strs, "m": int, "data_dir": _opt(str), "limit": _opt(int),
              "test_limit": _opt(int), "epochs": int, "lr": float, "batch": int, "p": float,
              "beta": float, "penalty": float, "per_class": int, "binarize": _bool},
    "run": {"kind": str, "trials": int},
}

DEFAULTS = {
    "model": {"n": 1000, "k": 100, "p": 0.1, "beta": 0.1, "seed": 0},
    "train": {"T": 5, "homeostasis_between_classes": True, "homeostasis_scope": "joint"},
    "stimulus": {"classes": 2, "r": 0.9, "q": 0.1, "alpha": None, "num_test": 100},
    "halfspace": {"delta": 1.0, "support": None, "threshold": 0.5, "num_test": 200,
                  "allow_signed": False},
    "sweep": {"param": None, "from": None, "to": None, "steps": 5, "values": None,
              "base": "stimulus", "tie_k": True},
    "mnist": {"extractors": ["identity", "linear", "nonlinear", "large-area", "random-areas",
                             "split-areas"],
              "m": 10000, "data_dir": None, "limit": None, "test_limit": None, "epochs": 30,
              "lr": 0.1, "batch": 128, "p": 0.1, "beta": 1.0, "penalty": 10.0, "per_class": 5,
              "binarize": False},
    "run": {"kind": "stimulus", "trials": 1},
}

# halfspace learning runs at beta = 1; four-class differs only in the class count
KIND_DEFAULTS = {
    "halfspace": {"model": {"beta": 1.0}},
    "four-class": {"stimulus": {"classes": 4}},
}


@dataclass
class ExperimentConfig:
    sections: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    # --- construction -------------------------------------------------------
    @classmethod
    def resolve(cls, kind, file_path=None, overrides=None) -> "ExperimentConfig":
        """Defaults, then kind defaults, then the INI file, then ``overrides``.

        ``overrides`` maps "section.key" to a value; None values are skipped.
        """
        cfg = cls()
        if kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {kind!r}; choose from {KINDS}")
        for sec, vals in KIND_DEFAULTS.get(kind, {}).items():
            cfg.sections[sec].update(vals)
        if file_path is not None:
            cfg.update(read_ini(file_path))
        cfg.sections["run"]["kind"] = kind
        for dotted, value in (overrides or {}).items():
            if value is None:
                continue
            sec, key = dotted.split(".", 1)
            cfg.set(sec, key, value)
        cfg.validate()
        return cfg

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        cfg = cls()
        cfg.update(d)
        cfg.validate()
        return cfg

    def set(self, sec, key, value):
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigError(f"unknown config key {sec}.{key}")
        try:
            self.sections[sec][key] = SCHEMA[sec][key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {sec}.{key}: {value!r} ({exc})") from None

    def update(self, d):
        for sec, vals in d.items():
            if sec not in SCHEMA:
                raise ConfigError(f"unknown config section [{sec}]")
            for key, value in vals.items():
                self.set(sec, key, value)

    # --- accessors ----------------------------------------------------------
    @property
    def kind(self):
        return self.sections["run"]["kind"]

    @property
    def trials(self):
        return self.sections["run"]["trials"]

    @property
    def seed(self):
        return self.sections["model"]["seed"]

    def __getitem__(self, sec):
        return self.sections[sec]

    def model_config(self, seed=None, **changes) -> ModelConfig:
        m = dict(self.sections["model"], **changes)
        if seed is not None:
            m["seed"] = seed
        return ModelConfig(**m)

    def train_config(self, beta=None, T=None) -> TrainConfig:
        t = self.sections["train"]
        return TrainConfig(T=t["T"] if T is None else T,
                           beta=self.sections["model"]["beta"] if beta is None else beta,
                           homeostasis_between_classes=t["homeostasis_between_classes"],
                           homeostasis_scope=t["homeostasis_scope"])

    def sweep_grid(self):
        s = self.sections["sweep"]
        if s["values"]:
            vals = list(s["values"])
        else:
            if s["from"] is None or s["to"] is None:
                raise ConfigError("sweep needs values, or from/to/steps")
            if s["steps"] < 1:
                raise ConfigError("sweep steps must be >= 1")
            if s["steps"] == 1:
                vals = [s["from"]]
            else:
                h = (s["to"] - s["from"]) / (s["steps"] - 1)
                vals = [s["from"] + i * h for i in range(s["steps"])]
        if s["param"] in INT_PARAMS:
            vals = [float(round(v)) for v in vals]
        # 12 significant digits hides linspace round-off such as 0.6000000000000001
        return [float(f"{v:.12g}") for v in vals]

    def sweep_base(self):
        s = self.sections["sweep"]
        return "halfspace" if s["param"] == "delta" else s["base"]

    # --- checks -------------------------------------------------------------
    def validate(self):
        kind = self.kind
        if kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {kind!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        self.model_config()  # raises on bad n, k, p, beta
        self.train_config()
        if self.sections["train"]["homeostasis_scope"] not in HOMEOSTASIS_SCOPES:
            raise ConfigError(f"homeostasis_scope must be one of {HOMEOSTASIS_SCOPES}")
        st = self.sections["stimulus"]
        if st["classes"] < 1 or st["num_test"] < 1:
            raise ConfigError("stimulus classes and num_test must be >= 1")
        swept = self.sections["sweep"]["param"] if kind == "sweep" else None
        if kind in ("stimulus", "four-class") or (kind == "sweep" and swept not in ("r", "q")):
            if not (0 <= st["q"] < st["r"] <= 1):
                raise ConfigError(f"need 0 <= q < r <= 1, got r={st['r']}, q={st['q']}")
        if self.sections["halfspace"]["num_test"] < 2:
            raise ConfigError("halfspace num_test must be >= 2")
        if kind == "sweep":
            s = self.sections["sweep"]
            if s["param"] not in SWEEP_PARAMS:
                raise ConfigError(f"sweep param must be one of {SWEEP_PARAMS}, got {s['param']!r}")
            if s["base"] not in ("stimulus", "halfspace", "four-class"):
                raise ConfigError("sweep base must be stimulus, halfspace or four-class")
            if not self.sweep_grid():
                raise ConfigError("sweep grid is empty")
        if kind == "mnist":
            from .features import KINDS as FEATURE_KINDS
            bad = [e for e in self.sections["mnist"]["extractors"] if e not in FEATURE_KINDS]
            if bad or not self.sections["mnist"]["extractors"]:
                raise ConfigError(f"unknown extractor(s) {bad}; choose from {FEATURE_KINDS}")
        return self

    def to_dict(self):
        return copy.deepcopy(self.sections)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def read_ini(path) -> dict:
    """Parse a key = value config file into {section: {key: raw string}}."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep "T" distinct from "t"
    try:
        with open(path) as f:
            cp.read_file(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from None
    return {sec: dict(cp[sec]) for sec in cp.sections()}


def write_ini(path, cfg: ExperimentConfig):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for sec, vals in cfg.sections.items():
        cp[sec] = {k: "" if v is None else " ".join(map(str, v)) if isinstance(v, list) else str(v)
                   for k, v in vals.items()}
    with open(path, "w") as f:
        cp.write(f)
