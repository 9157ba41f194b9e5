"""Closed-form bound evaluators and empirical estimators for trained models.

Every evaluator is a pure function of its arguments.  Bounds outside their
meaningful range are returned unclamped and marked in ``BoundReport.flags``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import ConfigError


class BoundDomainError(ValueError):
    pass


def _log_ratio(n, k):
    if not (n > 0 and k > 0):
        raise BoundDomainError("n and k must be positive")
    return 2.0 * math.log(n / k)


def beta0(n, k, p, r):
    """Smallest plasticity for which assembly creation is guaranteed (r + q ~ 1 form)."""
    if not n > k:
        raise BoundDomainError("need n > k")
    if not k * p > 0:
        raise BoundDomainError("need kp > 0")
    if not 0 < r <= 1:
        raise BoundDomainError("need 0 < r <= 1")
    L = _log_ratio(n, k)
    return ((math.sqrt(2) - r * r) * math.sqrt(L) + math.sqrt(6)) / (r * r * (math.sqrt(k * p) + math.sqrt(L)))


def beta0_full(n, k, p, r, q):
    """The same threshold before the r + q ~ 1 simplification."""
    if not n > k or not k * p > 0 or not 0 < r <= 1 or not 0 <= q < 1:
        raise BoundDomainError("need n > k, kp > 0, 0 < r <= 1, 0 <= q < 1")
    L = _log_ratio(n, k)
    s = r + q
    num = (math.sqrt(1 + s) - r * r / math.sqrt(s)) * math.sqrt(L) + math.sqrt(2 * (1 + s))
    return math.sqrt(s) / (r * r) * num / (math.sqrt(k * p) + math.sqrt(L))


def support_bound(beta, beta_0, k):
    if not (beta > 0 and beta_0 > 0):
        raise BoundDomainError("need beta > 0 and beta0 > 0")
    return k / -math.expm1(-(beta / beta_0) ** 2)


def recall_defect_bound(k, p, r):
    """Fraction of the recalled cap allowed outside the assembly core."""
    return math.exp(-k * p * r)


def gamma_recall_min(n, k, p, r):
    """Average core-to-assembly weight sufficient for recall."""
    if not (k * p * r > 0 and n >= k):
        raise BoundDomainError("need kpr > 0 and n >= k")
    return 1 + (math.sqrt(2) + math.sqrt(2 / (k * p * r) * math.log(n / k) + 2)) / math.sqrt(r)


def gamma_multi_max(n, k, p, r, alpha):
    """Largest average weight under which a second assembly keeps its overlap at alpha*k."""
    if not alpha > 0:
        raise BoundDomainError("alpha must be positive (the log term diverges at 0)")
    if not (0 < r <= 1 and k * p > 0 and n >= k):
        raise BoundDomainError("need 0 < r <= 1, kp > 0, n >= k")
    inner = (1 + r) / (r * alpha)
    if inner < 1:
        raise BoundDomainError("(1 + r) / (r alpha) < 1: square root of a negative log")
    return 1 + (math.sqrt(_log_ratio(n, k)) - math.sqrt(2 * math.log(inner))) / (alpha * r * math.sqrt(k * p))


def classify_defect_bound(gamma, alpha, k, p, r):
    return 2 * math.exp(-0.5 * (gamma * alpha - 1) ** 2 * k * p * r)


def halfspace_margin_requirement(n, k, p):
    """Required value of margin**2 * beta for learning a nonnegative threshold."""
    if not (p > 0 and n >= k > 0):
        raise BoundDomainError("need p > 0 and n >= k > 0")
    return math.sqrt(2 * k / p) * (math.sqrt(_log_ratio(n, k) + 2) + 1)


def halfspace_margin_at_constant_beta(n, k, p, beta):
    """Margin threshold when beta is held constant."""
    return (2 * k / (beta * beta * p)) ** 0.25 * math.sqrt(math.sqrt(_log_ratio(n, k) + 2) + 1)


def rounds_for_weight(gamma, p_fire_pre, q_fire_post, beta):
    """Rounds after which a synapse reaches weight gamma in expectation."""
    if not (0 < p_fire_pre <= 1 and 0 < q_fire_post <= 1 and beta > 0):
        raise BoundDomainError("need firing probabilities in (0, 1] and beta > 0")
    if gamma <= 1:
        return 0
    t = math.log(gamma) / (math.log1p(beta) * p_fire_pre * q_fire_post)
    # absorb rounding in exact cases such as gamma = (1 + beta)**5
    return int(math.ceil(t - 1e-9 * max(1.0, t)))


# --- reports ------------------------------------------------------------------

@dataclass
class BoundReport:
    n: int
    k: int
    p: float
    r: float
    q: float
    alpha: float
    beta: float
    delta: float | None
    gamma: float | None
    beta0: float
    support_bound: float | None
    recall_defect_bound: float
    gamma_recall_min: float
    gamma_multi_max: float | None
    classify_defect_bound: dict
    halfspace_margin_req: float
    halfspace_margin_met: bool | None
    flags: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def bound_report(n, k, p, r, beta, q=0.1, alpha=0.2, gamma=None, delta=None) -> BoundReport:
    """Evaluate every bound at one parameter point.

    The classification defect is evaluated both at the measured ``gamma`` (if
    given) and at the recall threshold ``gamma_recall_min``.
    """
    b0 = beta0(n, k, p, r)
    sb = support_bound(beta, b0, k) if beta > 0 else None
    rd = recall_defect_bound(k, p, r)
    grm = gamma_recall_min(n, k, p, r)
    flags = {}
    try:
        gmm = gamma_multi_max(n, k, p, r, alpha)
        flags["gamma_multi_max_vacuous"] = gmm < 1
    except BoundDomainError as exc:
        gmm = None
        flags["gamma_multi_max_error"] = str(exc)
    cdb = {"at_gamma_recall_min": classify_defect_bound(grm, alpha, k, p, r)}
    if gamma is not None:
        cdb["at_gamma_measured"] = classify_defect_bound(gamma, alpha, k, p, r)
    hm = halfspace_margin_requirement(n, k, p)
    flags["support_bound_missing"] = sb is None
    flags["beta_below_beta0"] = beta < b0
    flags["recall_defect_vacuous"] = rd >= 1
    flags["classify_defect_vacuous"] = {name: v >= 1 for name, v in cdb.items()}
    if gmm is not None and gamma is not None:
        flags["gamma_exceeds_multi_max"] = gamma > gmm
    return BoundReport(n=n, k=k, p=p, r=r, q=q, alpha=alpha, beta=beta, delta=delta, gamma=gamma,
                       beta0=b0, support_bound=sb, recall_defect_bound=rd, gamma_recall_min=grm,
                       gamma_multi_max=gmm, classify_defect_bound=cdb, halfspace_margin_req=hm,
                       halfspace_margin_met=None if delta is None else delta * delta * beta >= hm,
                       flags=flags)


# --- empirical ------------------------------------------------------------------

def measure_gamma(model, stim_core, assembly) -> float:
    """Mean baseline-normalized fiber weight from a stimulus core into an assembly core.

    1 means "never strengthened"; the baseline follows homeostatic rescaling.
    """
    w = model.fiber.weights
    in_core = np.zeros(w.n_src, dtype=bool)
    in_core[np.asarray(stim_core, dtype=np.intp)] = True
    in_asm = np.zeros(w.n_tgt, dtype=bool)
    in_asm[assembly.core_estimate] = True
    mask = in_asm[w.targets] & in_core[w.indices]
    if not mask.any():
        raise ConfigError("no fiber edges between stimulus core and assembly core")
    ratios = w.data[mask] / w.baseline[w.targets[mask]]
    return float(ratios.mean())


@dataclass
class EmpiricalStats:
    mu_trace: list
    nu_trace: list
    gamma_measured: list
    input_overlap: list
    assembly_overlap: list
    firing_probability: list

    def to_dict(self):
        return asdict(self)


def empirical_stats(model, classes, num_test, rng, samples=None) -> EmpiricalStats:
    """Estimators on a frozen trained model.

    ``mu_trace[c][t]`` is the first-timer fraction at training step t of class
    c; ``nu_trace[c][t]`` the largest fraction of that cap lying in an earlier
    class's assembly core (0 for the first class).  ``input_overlap`` is the
    mean |x ∩ core_b| for draws x of class a; ``firing_probability[c]`` the
    per-neuron frequency of firing over ``num_test`` draws from class c.
    """
    from .learning import test_caps
    from .stimuli import sample_stimulus

    k = model.area.k
    mu, nu = [], []
    for c, rec in enumerate(model.assemblies):
        mu.append([f / k for f in rec.trace.first_timers])
        earlier = [a.core_estimate for a in model.assemblies[:c]]
        nu.append([max((np.intersect1d(cap, core).size / k for core in earlier), default=0.0)
                   for cap in rec.caps])
    draws = samples if samples is not None else [sample_stimulus(cl, rng, num_test) for cl in classes]
    cores = [np.asarray(cl.core) for cl in classes]
    in_ov = np.array([[float(x[:, core].sum(axis=1).mean()) for core in cores] for x in draws])
    asm_ov = np.zeros((len(model.assemblies),) * 2)
    for a, ra in enumerate(model.assemblies):
        for b, rb in enumerate(model.assemblies):
            asm_ov[a, b] = np.intersect1d(ra.core_estimate, rb.core_estimate).size
    freq = []
    for x in draws:
        caps = test_caps(model, x)
        counts = np.bincount(caps.ravel(), minlength=model.area.n)
        freq.append((counts / len(x)).tolist())
    gammas = []
    for cl, rec in zip(classes, model.assemblies):
        core = getattr(cl, "core", None)
        gammas.append(measure_gamma(model, core, rec) if core is not None else None)
    return EmpiricalStats(mu_trace=mu, nu_trace=nu, gamma_measured=gammas,
                          input_overlap=in_ov.tolist(), assembly_overlap=asm_ov.tolist(),
                          firing_probability=freq)
