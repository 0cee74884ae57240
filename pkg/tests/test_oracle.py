import math

import numpy as np
import pytest

from vnrf.estimator import CountTable, count_patterns
from vnrf.lattice import Configuration, Window, security_region
from vnrf.models import IIDModel, PairwiseModel, PolygonModel, PolygonParams, RenewalModel
from vnrf.oracle import (MAX_STATES, OracleError, alpha0, bound_deltan, bound_expodedecker,
                         bound_ineq2, check_composition, check_context_identity,
                         check_loglik_forms, check_region_support, delta_n, dobrushin,
                         exact_measure, exact_pattern_probs)
from vnrf.sampler import renewal_exact_sample


def _flip_conditional(em, model, trials=30, seed=0):
    """Worst gap between measure ratios and the model's own single-site law."""
    X, P, w = em.configurations(), em.probabilities, em.window
    place = 2 ** (w.size - 1 - np.arange(w.size))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        r, i = int(rng.integers(len(X))), int(rng.integers(w.size))
        base = int(X[r] @ place) - int(X[r, i]) * int(place[i])
        p1 = P[base + place[i]] / (P[base] + P[base + place[i]])
        c = Configuration(w, X[r], 2, "periodic")
        worst = max(worst, abs(model.conditional(c, i)[1] - p1))
    return worst


# -- exact measures --------------------------------------------------------------

def test_iid_product_law():
    em = exact_measure(IIDModel((0.2, 0.8)), Window((5,)))
    x = em.configurations()
    expect = np.prod(np.where(x == 1, 0.8, 0.2), axis=1)
    assert np.allclose(em.probabilities, expect, atol=1e-14)


@pytest.mark.parametrize("model,window", [
    (PairwiseModel.ising(0.0), Window((10,))),
    (PolygonModel(PolygonParams(beta=0.0, L=1)), Window((3, 4))),
])
def test_beta_zero_uniform(model, window):
    em = exact_measure(model, window)
    assert np.allclose(em.probabilities, 2.0 ** -window.size)


def test_ising_ring_moments():
    em = exact_measure(PairwiseModel.ising(0.3), Window((12,)))
    m0 = em.marginal([0])
    assert m0[1] == pytest.approx(0.5, abs=1e-12)
    pair = em.marginal([0, 1])
    # P(equal) above 1/2 for ferromagnetic coupling
    assert pair[0] + pair[3] > 0.5 + 0.1


@pytest.mark.parametrize("model,window", [
    (PairwiseModel.ising(0.3, dim=2), Window((4, 4))),
    (PolygonModel(PolygonParams(beta=0.4, L=1)), Window((4, 4))),
    (PairwiseModel.ising(0.5, 0.2), Window((9,))),
])
def test_measure_consistent_with_specification(model, window):
    em = exact_measure(model, window)
    assert em.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
    assert em.probabilities.min() > 0
    assert _flip_conditional(em, model) < 1e-12


def test_renewal_line_measure():
    em = exact_measure(RenewalModel(), Window((12,)))
    assert em.geometry == "line"
    assert em.probabilities.sum() == pytest.approx(1.0)
    assert em.marginal([5])[1] == pytest.approx(0.5, abs=1e-12)
    # 0/1 symmetry
    assert np.allclose(em.probabilities, em.probabilities[::-1])


def test_oracle_errors():
    with pytest.raises(OracleError, match="too large"):
        exact_measure(PairwiseModel.ising(0.3, dim=2), Window((5, 5)))
    assert 2 ** 21 > MAX_STATES
    with pytest.raises(OracleError):
        exact_measure(PolygonModel(PolygonParams(beta=0.2, L=2)), Window((4, 4)))
    with pytest.raises(OracleError):
        exact_measure(PairwiseModel.ising(0.3), Window((3, 3)))


# -- pattern probabilities ---------------------------------------------------------

def test_pattern_probs_iid():
    em = exact_measure(IIDModel((0.35, 0.65)), Window((7,)))
    pp = exact_pattern_probs(em, 2)
    assert pp.p_eta.sum() == pytest.approx(1.0)
    assert np.allclose(pp.p_cond, [0.35, 0.65])


@pytest.mark.parametrize("ell", [1, 2])
def test_pattern_probs_normalised(ell):
    em = exact_measure(PairwiseModel.ising(0.4), Window((11,)))
    pp = exact_pattern_probs(em, ell)
    assert pp.p_eta.sum() == pytest.approx(1.0)
    assert np.allclose(pp.p_cond.sum(axis=1), 1.0)
    assert np.allclose(pp.p_joint.sum(axis=1), pp.p_eta)


def test_pattern_wider_than_window():
    with pytest.raises(OracleError):
        exact_pattern_probs(exact_measure(PairwiseModel.ising(0.4), Window((4,))), 2)


def test_alpha0_lower_bound():
    m = PairwiseModel.ising(0.4)
    em = exact_measure(m, Window((12,)))
    a0 = alpha0(em, 1)
    assert 0 < a0 <= 0.25
    assert a0 >= m.local_table()[1].min() ** 2


def test_delta_n_zero_for_proportional_counts():
    em = exact_measure(IIDModel((0.5, 0.5)), Window((4,)))
    pp = exact_pattern_probs(em, 1)
    key = 2
    assert pp.p_joint[key].tolist() == [0.125, 0.125]
    table = CountTable(radius=1, alphabet_size=2, dim=1, keys=np.array([key]),
                       counts=np.array([[100, 100]]), sites=np.arange(800),
                       site_rows=np.zeros(800, dtype=np.int64))
    assert delta_n(table, pp, key) == pytest.approx(0.0, abs=1e-15)


def test_delta_n_shrinks_with_n():
    em = exact_measure(RenewalModel(), Window((15,)))
    pp = exact_pattern_probs(em, 1)
    med = []
    for n in (1000, 100_000):
        vals = []
        for s in range(10):
            cfg = renewal_exact_sample(RenewalModel().params, n, s)
            table = count_patterns(cfg, security_region(cfg.window, margin=1), 1)
            vals.append(max(abs(delta_n(table, pp, k)) for k in range(4)))
        med.append(np.median(vals))
    assert med[1] < med[0] / 3


def test_bound_shapes():
    assert bound_expodedecker(10 ** 4, 0.5, 1, 1) == pytest.approx(math.exp(1 / math.e - 10 ** 4 * 0.25 / (2 * math.e)))
    for f in (lambda n: bound_ineq2(n, 0.1, 0.2), lambda n: bound_deltan(n, 0.1, 0.2, 2),
              lambda n: bound_expodedecker(n, 0.1, 2, 2)):
        vals = [f(n) for n in (10, 100, 10 ** 4)]
        assert vals[0] >= vals[1] >= vals[2] >= 0


# -- Dobrushin --------------------------------------------------------------------

def test_dobrushin_iid_zero():
    rep = dobrushin(IIDModel((0.3, 0.7)))
    assert rep.method == "zero" and rep.r == 0.0 and rep.contraction


@pytest.mark.parametrize("beta", [0.2, 0.6])
def test_dobrushin_ising_exhaustive(beta):
    rep = dobrushin(PairwiseModel.ising(beta))
    assert rep.method == "exhaustive"
    # one neighbour flip moves the field by 2: sensitivity tanh(2 beta) / 2
    for k in ((-1,), (1,)):
        assert rep.r_pairs[k] == pytest.approx(0.5 * math.tanh(2 * beta))
    assert rep.contraction == (math.tanh(2 * beta) < 1)
    assert rep.beta(1) == 0.0


def test_dobrushin_2d_ising_range():
    rep = dobrushin(PairwiseModel.ising(0.2, dim=2))
    assert rep.r < 1
    assert rep.r_pairs[(1, 1)] == 0.0
    assert rep.beta(1) == 0.0
    d = rep.as_dict()
    assert d["r_lt_1"] and set(d["beta_ell"]) == {"0", "1"}


def test_dobrushin_polygon_bounds():
    rep = dobrushin(PolygonModel(PolygonParams(beta=0.3, L=2)), samples=100, seed=1)
    assert rep.method == "upper-bound"
    for k, lo in rep.lower_pairs.items():
        assert rep.r_pairs.get(k, 0.0) >= lo - 1e-12, k
    assert rep.beta(4) == 0.0
    assert "r_lower_sampled" in rep.as_dict()


def test_dobrushin_unbounded_range():
    with pytest.raises(OracleError):
        dobrushin(RenewalModel())


# -- identity checks ------------------------------------------------------------------

def test_loglik_forms_agree():
    out = check_loglik_forms(trials=5, n=300)
    assert out["holds"], out


def test_composition_check():
    out = check_composition()
    assert out["holds"]
    assert out["max_direct_gap"] < 1e-10


def test_region_support_check():
    assert check_region_support(trials=10)["holds"]


def test_context_identity_report_shape():
    out = check_context_identity(trials=10)
    assert set(out) >= {"trials", "failures", "holds", "witness"}
    assert out["holds"] == (out["failures"] == 0)
    if out["witness"] is not None:
        w = out["witness"]
        assert w["closed_form_only"] or w["support_union_only"]
