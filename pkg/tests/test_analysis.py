import math

import numpy as np
import pytest

from asmlearn.analysis import (BoundDomainError, beta0, beta0_full, bound_report, classify_defect_bound,
                               empirical_stats, gamma_multi_max, gamma_recall_min, halfspace_margin_at_constant_beta,
                               halfspace_margin_requirement, measure_gamma, recall_defect_bound,
                               rounds_for_weight, support_bound)
from asmlearn.graph import ModelConfig, make_rng
from asmlearn.learning import TrainConfig, build_model, train_classes
from asmlearn.stimuli import make_stimulus_classes

from .oracles import bounds_oracle as oracle


def test_beta0_value_and_oracle():
    assert beta0(1000, 100, 0.1, 0.9) == pytest.approx(0.8713, abs=1e-3)
    assert beta0(1000, 100, 0.1, 0.9) == pytest.approx(float(oracle.beta0(1000, 100, 0.1, 0.9)), rel=1e-12)


def test_beta0_monotone():
    rs = np.linspace(0.5, 1.0, 11)
    kps = np.linspace(5, 100, 20)
    for kp in kps:
        vals = [beta0(1000, 100, kp / 100, r) for r in rs]
        assert np.all(np.diff(vals) < 0)
    for r in rs:
        vals = [beta0(1000, 100, kp / 100, r) for kp in kps]
        assert np.all(np.diff(vals) < 0)
    assert beta0(1000, 100, 0.999, 0.9) < beta0(1000, 100, 0.1, 0.9)


def test_beta0_domain():
    for args in [(100, 100, 0.1, 0.9), (1000, 100, 0.0, 0.9), (1000, 100, 0.1, 0.0), (1000, 100, 0.1, 1.2)]:
        with pytest.raises(BoundDomainError):
            beta0(*args)


def test_beta0_full_variant_at_r_plus_q_one():
    # same sqrt(L) coefficient as the short form; the additive constant is sqrt(2 * 2) = 2, not sqrt(6)
    n, k, p, r = 1000, 100, 0.1, 0.9
    L = 2 * math.log(n / k)
    expect = ((math.sqrt(2) - r * r) * math.sqrt(L) + 2) / (r * r * (math.sqrt(k * p) + math.sqrt(L)))
    assert beta0_full(n, k, p, r, 1 - r) == pytest.approx(expect, rel=1e-12)
    assert beta0_full(n, k, p, r, 1 - r) < beta0(n, k, p, r)


def test_support_bound():
    assert support_bound(1.0, 1.0, 100) == pytest.approx(100 / (1 - math.exp(-1)))
    assert support_bound(1.0, 1.0, 100) == pytest.approx(158.2, abs=0.05)
    b0 = beta0(1000, 100, 0.1, 0.9)
    assert support_bound(1.0, b0, 100) == pytest.approx(136.6, abs=0.05)
    assert support_bound(1.0, b0, 100) == pytest.approx(float(oracle.support_bound(1.0, oracle.beta0(1000, 100, .1, .9), 100)), rel=1e-12)
    vals = [support_bound(b, 1.0, 100) for b in np.linspace(0.1, 10, 50)]
    assert all(v >= 100 for v in vals) and np.all(np.diff(vals) <= 0)
    assert support_bound(50.0, 1.0, 100) == pytest.approx(100)


def test_recall_defect():
    assert recall_defect_bound(100, 0.1, 0.9) == pytest.approx(1.234e-4, rel=0.01)
    assert recall_defect_bound(100, 0.1, 0.9) == pytest.approx(float(oracle.recall_defect(9)), rel=1e-12)
    assert recall_defect_bound(100, 0.1, 0.0) == 1.0
    assert recall_defect_bound(1, math.log(2), 1) == pytest.approx(0.5)


def test_gamma_recall_min():
    assert gamma_recall_min(1000, 100, 0.1, 0.9) == pytest.approx(4.161, abs=1e-3)
    assert gamma_recall_min(1000, 100, 0.1, 0.9) == pytest.approx(float(oracle.gamma_recall_min(1000, 100, .1, .9)), rel=1e-12)
    assert gamma_recall_min(1000, 100, 1e9, 1.0) == pytest.approx(1 + 2 * math.sqrt(2), abs=1e-3)
    vals = [gamma_recall_min(1000, 100, 0.1, r) for r in np.linspace(0.1, 1, 10)]
    assert np.all(np.diff(vals) < 0)


def test_gamma_multi_max():
    assert gamma_multi_max(10**7, 10**4, 1e-3, 0.9, 0.2) == pytest.approx(3.716, abs=1e-3)
    desk = gamma_multi_max(1000, 100, 0.1, 0.9, 0.2)
    assert desk < 1
    assert desk == pytest.approx(float(oracle.gamma_multi_max(1000, 100, .1, .9, .2)), rel=1e-12)
    with pytest.raises(BoundDomainError):
        gamma_multi_max(1000, 100, 0.1, 0.9, 0.0)


def test_classify_defect():
    assert classify_defect_bound(1.5, 0.2, 100, 0.1, 0.9) == pytest.approx(2 * math.exp(-2.205), rel=1e-9)
    assert classify_defect_bound(1.5, 0.2, 100, 0.1, 0.9) == pytest.approx(0.2205, abs=5e-4)
    assert classify_defect_bound(5.0, 0.2, 100, 0.1, 0.9) == 2.0
    assert classify_defect_bound(2.0, 1.0, 1e6, 1.0, 1.0) == 0.0


def test_halfspace_requirement():
    req = halfspace_margin_requirement(1000, 100, 0.1)
    assert req == pytest.approx(159.7, abs=0.5)
    assert req == pytest.approx(float(oracle.halfspace_req(1000, 100, 0.1)), rel=1e-12)
    assert math.sqrt(req) == pytest.approx(12.64, abs=0.01)
    for beta in (0.1, 0.5, 1.0, 3.0):
        assert halfspace_margin_at_constant_beta(1000, 100, 0.1, beta) == pytest.approx(math.sqrt(req / beta), rel=1e-12)
    assert halfspace_margin_requirement(100, 100, 0.1) == pytest.approx(math.sqrt(2000) * (math.sqrt(2) + 1))


def test_rounds_for_weight():
    assert rounds_for_weight(1.1 ** 5, 1, 1, 0.1) == 5
    assert rounds_for_weight(2, 0.9, 1, 0.1) == 9
    assert rounds_for_weight(1, 0.9, 1, 0.1) == 0
    for g, pf, qf, b in [(2, 0.9, 1, 0.1), (3.7, 0.5, 0.8, 0.3), (10, 1, 1, 1.0), (1.5, 0.2, 0.9, 0.05)]:
        assert rounds_for_weight(g, pf, qf, b) == oracle.rounds_brute(g, pf, qf, b)


def test_evaluators_pure():
    a = [beta0(1000, 100, 0.1, 0.9), gamma_recall_min(1000, 100, 0.1, 0.9)]
    b = [beta0(1000, 100, 0.1, 0.9), gamma_recall_min(1000, 100, 0.1, 0.9)]
    assert a == b


def test_bound_report_flags():
    rep = bound_report(1000, 100, 0.1, 0.9, 1.0, gamma=1.5, delta=1.0)
    d = rep.to_dict()
    assert d["beta0"] == pytest.approx(0.8713, abs=1e-3) and d["support_bound"] == pytest.approx(136.6, abs=0.05)
    assert d["flags"]["gamma_multi_max_vacuous"] is True
    assert d["flags"]["beta_below_beta0"] is False
    assert d["halfspace_margin_met"] is False
    assert set(d["classify_defect_bound"]) == {"at_gamma_recall_min", "at_gamma_measured"}
    assert d["flags"]["classify_defect_vacuous"]["at_gamma_measured"] is False
    low = bound_report(1000, 100, 0.1, 0.9, 0.5)
    assert low.flags["beta_below_beta0"]
    assert bound_report(1000, 100, 0.1, 0.9, 1.0, alpha=0.0).flags["gamma_multi_max_error"]


def _trained(beta, T=5, classes=2, seed=0, r=0.9, q=0.1):
    m = build_model(ModelConfig(n=1000, k=100, p=0.1, beta=beta, seed=seed))
    rng = make_rng(seed, "stimuli")
    cl = make_stimulus_classes(classes, 100, 1000, r, q, rng)
    train_classes(m, cl, TrainConfig(T=T, beta=beta), make_rng(seed, "train"))
    return m, cl


def test_measure_gamma_untrained_and_beta_zero():
    m = build_model(ModelConfig(n=1000, k=100, p=0.1))
    cl = make_stimulus_classes(1, 100, 1000, 0.9, 0.1, make_rng(0, "s"))
    from asmlearn.learning import AssemblyRecord
    rec = AssemblyRecord(label=0, core_estimate=np.arange(100), support=np.arange(100))
    assert measure_gamma(m, cl[0].core, rec) == 1.0
    m0, cl0 = _trained(0.0)
    assert all(measure_gamma(m0, c.core, a) == 1.0 for c, a in zip(cl0, m0.assemblies))


def test_measure_gamma_after_strong_training():
    gammas = []
    for seed in range(5):
        m, cl = _trained(1.0, classes=1, seed=seed)
        gammas.append(measure_gamma(m, cl[0].core, m.assemblies[0]))
    # each core synapse is strengthened on roughly r*T of the T rounds, so gamma is far above 1
    assert min(gammas) > gamma_recall_min(1000, 100, 0.1, 0.9)
    assert max(gammas) <= 2.0 ** 5


def test_empirical_stats():
    m, cl = _trained(0.1)
    es = empirical_stats(m, cl, 200, make_rng(0, "stats"))
    mu = np.array(es.mu_trace)
    assert mu.shape == (2, 5) and (mu >= 0).all() and (mu <= 1).all()
    assert all(0 <= v <= 1 for row in es.nu_trace for v in row)
    ao = np.array(es.assembly_overlap)
    assert np.array_equal(ao, ao.T) and np.all(np.diag(ao) == 100)
    io = np.array(es.input_overlap)
    shared = np.intersect1d(cl[0].core, cl[1].core).size
    assert abs(io[0, 0] - 90) < 2
    # shared core neurons fire at r, the rest of core b only at the background rate
    assert abs(io[0, 1] - (0.9 * shared + 0.01 * (100 - shared))) < 1.5
    assert all(g > 1 for g in es.gamma_measured)
    assert len(es.firing_probability) == 2 and len(es.firing_probability[0]) == 1000


def test_firing_probability_map_single_class():
    m, cl = _trained(1.0, T=10, classes=1, seed=2)
    es = empirical_stats(m, cl, 500, make_rng(2, "stats"))
    fp = np.array(es.firing_probability[0])
    core, support = m.assemblies[0].core_estimate, m.assemblies[0].support
    assert fp[core].mean() > 0.95
    assert fp[np.setdiff1d(np.arange(1000), support)].mean() < 0.01
