import json
import math

import numpy as np
import pytest

from vnrf.lattice import Configuration, LatticeError, Window
from vnrf.models import (IIDModel, ModelFileError, PairwiseModel, PolygonModel, PolygonParams,
                         PositivityError, RenewalModel, RenewalParams, compose_specification,
                         consistency_gap, load_model, model_from_dict)
from vnrf.models.compose import direct_pair_law
from vnrf.models.polygon import (closed_form_context, closure, coupling_term, dependence_set,
                                 polygon_energy, polygon_gamma0, polygon_region, prob_plus_nb)
from vnrf.models.renewal import (prob_one_both_ones, prob_one_left_one, renewal_boundary_scan,
                                 renewal_gamma0, run_distances)
from vnrf.sampler import renewal_exact_sample


def line(values, boundary="free"):
    return Configuration(Window((len(values),)), np.array(values), 2, boundary)


def resample_outside(config, keep, rng):
    """Copy of config with every site outside ``keep`` redrawn uniformly."""
    y = config.flat.copy()
    mask = np.ones(len(y), bool)
    mask[list(keep)] = False
    y[mask] = rng.integers(0, config.alphabet_size, mask.sum())
    return Configuration(config.window, y, config.alphabet_size, config.boundary, config.fill)


# -- renewal -------------------------------------------------------------------

def test_renewal_params_normalised():
    p = RenewalParams()
    assert (p.rho1, p.rho2, p.c1, p.c2) == (0.5, 0.25, 0.5, 1.5)
    assert p.pmf(np.arange(1, 400)).sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        RenewalParams(c1=1.0)


def test_renewal_scan_example():
    c = line([1, 0, 0, 0, 0, 1])
    assert renewal_boundary_scan(c, 2) == (2, 3, 0, 0)
    m = RenewalModel()
    ctx = m.context(c, 2)
    assert ctx.sites(c, 2) == {0, 1, 3, 4, 5}
    assert ctx.radius == 3


def test_renewal_scan_nearest_ones():
    # centre with zeros on both sides: k, l are distances to the nearest 1s
    c = line([0, 1, 1, 0, 0, 0, 0, 0, 1, 1, 0])
    assert renewal_boundary_scan(c, 5) == (3, 3, 0, 0)


def test_renewal_scan_errors():
    with pytest.raises(LatticeError, match="context exceeds window"):
        renewal_boundary_scan(line([1] * 8), 4)
    with pytest.raises(LatticeError, match="context exceeds window"):
        renewal_boundary_scan(line([1] * 8, "periodic"), 4)


def test_renewal_invalid_distance():
    with pytest.raises(ValueError, match="invalid run distance"):
        renewal_gamma0(RenewalParams(), 1, 3, 1, 1)


@pytest.mark.parametrize("k", [2, 3, 4, 7])
@pytest.mark.parametrize("l", [2, 3, 5])
def test_renewal_symmetries(k, l):
    p = RenewalParams()
    g = lambda *a: renewal_gamma0(p, k, l, *a)
    # 0 <-> 1 exchange: P(1 | 1 1) = P(0 | 0 0), so P(1 | 1 1) + P(1 | 0 0) = 1
    assert g(1, 1) + g(0, 0) == pytest.approx(1.0, abs=1e-14)
    assert g(1, 0) + g(0, 1) == pytest.approx(1.0, abs=1e-14)
    # the line is reversible: mirroring swaps (k, l) and the neighbours
    assert prob_one_left_one(p, k, l) + prob_one_left_one(p, l, k) == pytest.approx(1.0, abs=1e-12)
    assert prob_one_both_ones(p, k, l) == pytest.approx(prob_one_both_ones(p, l, k), abs=1e-14)
    assert 0 < g(1, 1) < 1 and 0 < g(1, 0) < 1


def test_renewal_equal_distances_half():
    p = RenewalParams()
    for k in range(2, 8):
        assert prob_one_left_one(p, k, k) == pytest.approx(0.5, abs=1e-14)


def test_renewal_matches_exact_line_law():
    """gamma_0 is the ratio of two word probabilities of the stationary process."""
    m = RenewalModel()
    for word in ([0, 1, 1, 1, 0, 0, 1], [1, 0, 1, 1, 0, 1], [1, 0, 0, 1, 1, 1, 0]):
        word = np.array(word)
        i = 3
        c = line(word)
        p1 = m.conditional(c, i)[1]
        a, b = word.copy(), word.copy()
        a[i], b[i] = 1, 0
        pa, pb = m.window_probability(a), m.window_probability(b)
        assert p1 == pytest.approx(pa / (pa + pb), rel=1e-12)


def test_run_distances_vectorised(rng):
    x = rng.integers(0, 2, 300)
    x[:2] = [0, 1]
    x[-2:] = [1, 0]
    k, l = run_distances(x)
    c = line(x)
    for i in range(1, 299):
        try:
            kk, ll, _, _ = renewal_boundary_scan(c, i)
        except LatticeError:
            assert k[i] == -1 or l[i] == -1
            continue
        assert (k[i], l[i]) == (kk, ll)


def test_renewal_context_sufficiency_and_minimality():
    m = RenewalModel()
    rng = np.random.default_rng(3)
    c = renewal_exact_sample(m.params, 4000, rng)
    for i in rng.integers(100, 3900, 200):
        i = int(i)
        g = m.conditional(c, i)
        sp = m.context(c, i).sites(c, i)
        assert m.context(c, i).radius >= 2
        keep = sp | {i}
        lo, hi = min(keep), max(keep)
        # resample outside, but never inside the segment (that would be inside sp)
        other = resample_outside(c, set(range(lo, hi + 1)), rng)
        assert np.array_equal(m.conditional(other, i), g)
        for j in sp:
            y = c.flat.copy()
            y[j] = 1 - y[j]
            changed = m.conditional(line(y), i)
            assert not np.allclose(changed, g, rtol=0, atol=1e-15), (i, j)


def test_renewal_q_min():
    m = RenewalModel()
    assert m.q_min == pytest.approx(0.26036, abs=1e-5)
    assert m.q_min_is_estimate
    c = renewal_exact_sample(m.params, 20000, 1)
    k, l = run_distances(c.flat)
    for i in np.flatnonzero((k > 0) & (l > 0))[::50]:
        assert m.conditional(c, int(i)).min() >= m.q_min - 1e-15


# -- polygon -------------------------------------------------------------------

def grid(sym, boundary="free"):
    sym = np.asarray(sym)
    return Configuration(Window(sym.shape), sym, 2, boundary)


def test_polygon_trivial_limits(rng):
    c = grid(rng.integers(0, 2, (11, 11)))
    i = c.window.index((5, 5))
    assert np.allclose(polygon_gamma0(c, i, PolygonParams(beta=0.0, L=2)), 0.5)
    zero = PolygonParams(beta=0.7, L=2, J=(0.0,) * 26)
    assert np.allclose(polygon_gamma0(c, i, zero), 0.5)
    assert polygon_energy(c, [i, i + 1], zero)[0] == 0.0


def test_polygon_ring_of_plus_spins():
    s = np.zeros((5, 5), int)
    s[1:4, 1:4] = 1
    s[2, 2] = 0
    c = grid(s)
    region, escaped = closure(c, (2, 2), 1)
    assert not escaped
    assert region == {(x, y) for x in (1, 2, 3) for y in (1, 2, 3)}
    r = polygon_region(c, c.window.index((2, 2)), PolygonParams(beta=0.1, L=1))
    assert len(r.offsets) == 9 and r.radius == 1


def test_polygon_all_minus_is_box_and_full_context():
    c = grid(np.zeros((13, 13), int))
    i = c.window.index((6, 6))
    p = PolygonParams(beta=0.1, L=2)
    r = polygon_region(c, i, p)
    assert r.truncated and len(r.offsets) == 25
    ctx = closed_form_context(c, i, p)
    assert len(ctx) == 9 ** 2 - 1 and max(max(abs(a), abs(b)) for a, b in ctx) == 4


def test_polygon_region_monotone(rng):
    p = PolygonParams(beta=0.1, L=2)
    for _ in range(200):
        c = grid(rng.integers(0, 2, (9, 9)))
        i = c.window.index((4, 4))
        before = polygon_region(c, i, p).offsets
        zeros = np.argwhere(c.symbols == 0)
        x, y = zeros[rng.integers(len(zeros))]
        after = polygon_region(c.with_value((int(x), int(y)), 1), i, p).offsets
        assert after <= before


def test_polygon_region_is_stopping_set(rng):
    """Gamma_i only depends on the spins inside Gamma_i."""
    p = PolygonParams(beta=0.1, L=2)
    for _ in range(100):
        c = grid(rng.integers(0, 2, (9, 9)))
        i = c.window.index((4, 4))
        r = polygon_region(c, i, p)
        keep = r.sites(c, i)
        if r.truncated:
            continue
        other = resample_outside(c, keep, rng)
        assert polygon_region(other, i, p).offsets == r.offsets


def test_polygon_coupling_parity(rng):
    """On a fixed region of even size the product of spins is flip invariant."""
    J = tuple(0.0 if n % 2 else 1.0 + n for n in range(26))
    p = PolygonParams(beta=0.1, L=2, J=J)
    for _ in range(100):
        c = grid(rng.integers(0, 2, (9, 9)))
        flipped = grid(1 - c.symbols)
        region, _ = closure(c, (4, 4), 2)
        assert coupling_term(c, region, p) == coupling_term(flipped, region, p)


def test_polygon_gamma_matches_region_energy(rng):
    """The single-site law is the Gibbs ratio of H over a 5x5 block containing i."""
    p = PolygonParams(beta=0.4, L=2)
    for _ in range(20):
        c = grid(rng.integers(0, 2, (15, 15)))
        i = c.window.index((7, 7))
        block = [c.window.index((x, y)) for x in range(5, 10) for y in range(5, 10)]
        h = [polygon_energy(c.with_value((7, 7), a), block, p)[0] for a in (0, 1)]
        expect = 1.0 / (1.0 + math.exp(-p.beta * (h[0] - h[1])))
        assert polygon_gamma0(c, i, p)[1] == pytest.approx(expect, rel=1e-12)


def test_polygon_kernel_matches_reference(rng):
    p = PolygonParams(beta=0.3, L=2)
    J = np.array(p.J)
    for boundary in ("free", "periodic"):
        for _ in range(100):
            c = grid(rng.integers(0, 2, (11, 11)), boundary)
            x, y = (5, 5) if boundary == "free" else tuple(rng.integers(0, 11, 2))
            got = prob_plus_nb(c.symbols.copy(), x, y, p.L, J, p.beta, boundary == "periodic", 0)
            ref = polygon_gamma0(c, c.window.index((x, y)), p)[1]
            assert got == pytest.approx(ref, abs=1e-13)


def test_polygon_context_sufficiency(rng):
    m = PolygonModel(PolygonParams(beta=0.3, L=2))
    for dens in (0.5, 0.85):
        for _ in range(100):
            c = grid((rng.random((11, 11)) < dens).astype(int))
            i = c.window.index((5, 5))
            g = m.conditional(c, i)
            keep = m.context(c, i).sites(c, i) | {i}
            other = resample_outside(c, keep, rng)
            assert np.allclose(m.conditional(other, i), g, rtol=0, atol=1e-14)


def test_polygon_context_inside_range(rng):
    m = PolygonModel(PolygonParams(beta=0.3, L=2))
    for _ in range(50):
        c = grid(rng.integers(0, 2, (11, 11)))
        i = c.window.index((5, 5))
        assert 1 <= m.context(c, i).radius <= 4
        assert dependence_set(c, i, m.params) == m.context(c, i).offsets


def test_polygon_margin_error():
    m = PolygonModel()
    c = grid(np.ones((9, 9), int))
    with pytest.raises(LatticeError):
        m.conditional(c, c.window.index((1, 4)))


def test_polygon_q_min_bound(rng):
    m = PolygonModel(PolygonParams(beta=0.05, L=2))
    for _ in range(200):
        c = grid(rng.integers(0, 2, (11, 11)), "periodic")
        assert m.conditional(c, int(rng.integers(121))).min() >= m.q_min


def test_polygon_params_validation():
    with pytest.raises(ValueError):
        PolygonParams(beta=-1)
    with pytest.raises(ValueError):
        PolygonParams(L=2, J=(1.0, 2.0))


# -- baselines -----------------------------------------------------------------

def test_iid_model():
    m = IIDModel((0.3, 0.7))
    c = line([0, 1, 0, 1, 1])
    assert np.allclose(m.conditional(c, 2), [0.3, 0.7])
    assert m.context(c, 2).offsets == frozenset() and m.context(c, 2).radius == 1
    with pytest.raises(PositivityError):
        IIDModel((0.0, 1.0))


def test_ising_2d_hand_formula(rng):
    beta = 0.2
    m = PairwiseModel.ising(beta, dim=2)
    c = grid(rng.integers(0, 2, (6, 6)), "periodic")
    s = 2 * c.symbols - 1
    for x in range(6):
        for y in range(6):
            h = s[(x - 1) % 6, y] + s[(x + 1) % 6, y] + s[x, (y - 1) % 6] + s[x, (y + 1) % 6]
            p_plus = math.exp(beta * h) / (math.exp(beta * h) + math.exp(-beta * h))
            assert m.conditional(c, c.window.index((x, y)))[1] == pytest.approx(p_plus, rel=1e-13)


def test_markov_chain_conditional():
    P = np.array([[0.8, 0.2], [0.3, 0.7]])
    m = PairwiseModel.markov_chain(P)
    c = line([0, 1, 1, 0, 1])
    # P(x_i = a | x_{i-1} = 1, x_{i+1} = 0) ~ P[1, a] P[a, 0]
    w = P[1, :] * P[:, 0]
    assert np.allclose(m.conditional(c, 2), w / w.sum())
    assert (m.true_radii(c, np.arange(1, 4)) == 1).all()
    T, pi = m.chain_transition()
    assert np.allclose(T, P) and np.allclose(pi @ P, pi)


def test_pairwise_table_matches_conditional(rng):
    m = PairwiseModel.ising(0.3, 0.1, dim=2)
    ell, table = m.local_table()
    c = grid(rng.integers(0, 2, (5, 5)), "periodic")
    from vnrf.lattice import extract_pattern
    for i in range(25):
        key = extract_pattern(c, i, ell).key
        assert np.allclose(table[key], m.conditional(c, i))


def test_pairwise_positivity():
    with pytest.raises(PositivityError):
        PairwiseModel([[1.0, 0.0], [1.0, 1.0]])


# -- properties shared by every model --------------------------------------------

def _models():
    return [
        (IIDModel((0.4, 0.6)), (40,)),
        (PairwiseModel.markov_chain([[0.8, 0.2], [0.3, 0.7]]), (40,)),
        (PairwiseModel.ising(0.2, dim=2), (8, 8)),
        (RenewalModel(), (40,)),
        (PolygonModel(PolygonParams(beta=0.3, L=2)), (11, 11)),
    ]


@pytest.mark.parametrize("model,extents", _models(), ids=lambda v: getattr(v, "name", ""))
def test_normalisation_positivity(model, extents):
    rng = np.random.default_rng(7)
    trials = 2000 if model.name == "polygon" else 10_000
    low = 1.0
    for _ in range(trials):
        x = rng.integers(0, model.alphabet_size, extents)
        if model.name == "renewal":
            x[:20] = 1 - np.arange(20) % 2 if rng.random() < 0.1 else x[:20]
        c = Configuration(Window(extents), x, model.alphabet_size, "periodic")
        try:
            g = model.conditional(c, int(rng.integers(c.window.size)))
        except LatticeError:
            continue
        assert abs(g.sum() - 1.0) <= 1e-12
        low = min(low, g.min())
    assert low >= model.q_min - 1e-15


@pytest.mark.parametrize("model,extents", _models(), ids=lambda v: getattr(v, "name", ""))
def test_translation_covariance(model, extents):
    rng = np.random.default_rng(8)
    for _ in range(30):
        c = Configuration(Window(extents), rng.integers(0, 2, extents), 2, "periodic")
        shift = tuple(int(s) for s in rng.integers(0, 5, len(extents)))
        moved = Configuration(c.window, np.roll(c.symbols, shift, axis=tuple(range(len(extents)))),
                              2, "periodic")
        i = int(rng.integers(c.window.size))
        j = c.window.index(tuple((a + s) % e for a, s, e in zip(c.window.coords(i), shift, extents)))
        try:
            g = model.conditional(c, i)
        except LatticeError:
            continue
        assert np.allclose(model.conditional(moved, j), g, rtol=0, atol=1e-14)
        assert model.context(moved, j).offsets == model.context(c, i).offsets


@pytest.mark.parametrize("model,extents", _models()[:3], ids=lambda v: getattr(v, "name", ""))
def test_fixed_context_sufficiency_minimality(model, extents):
    rng = np.random.default_rng(9)
    for _ in range(200):
        c = Configuration(Window(extents), rng.integers(0, 2, extents), 2, "periodic")
        i = int(rng.integers(c.window.size))
        g = model.conditional(c, i)
        sp = model.context(c, i).sites(c, i)
        other = resample_outside(c, sp | {i}, rng)
        assert np.array_equal(model.conditional(other, i), g)
        for j in sp:
            coord = c.window.coords(j)
            changes = [not np.allclose(model.conditional(c.with_value(coord, a), i), g)
                       for a in range(2)]
            assert any(changes)


# -- composition -------------------------------------------------------------------

def test_compose_single_site_is_gamma():
    m = PairwiseModel.ising(0.3)
    c = line([0, 1, 1, 0, 1, 0, 0, 1], "periodic")
    law, sp = compose_specification(m, c, (3,))
    g = m.conditional(c, 3)
    assert law[(0,)] == pytest.approx(g[0], abs=1e-15) and law[(1,)] == pytest.approx(g[1], abs=1e-15)
    assert sp == {2, 4}


@pytest.mark.parametrize("sites", [(2, 3), (2, 3, 4), (1, 3, 6)])
def test_compose_matches_direct(sites):
    m = PairwiseModel.ising(0.3)
    c = line([0, 1, 1, 0, 1, 0, 0, 1], "periodic")
    law, sp = compose_specification(m, c, sites)
    direct = direct_pair_law(m, c, sites)
    assert sum(law.values()) == pytest.approx(1.0, abs=1e-10)
    assert max(abs(law[k] - direct[k]) for k in law) <= 1e-10
    rev, _ = compose_specification(m, c, sites, order=sites[::-1])
    assert max(abs(law[k] - rev[k]) for k in law) <= 1e-12
    expect = set()
    for s in sites:
        expect |= {(s - 1) % 8, (s + 1) % 8}
    assert sp == expect - set(sites)


def test_compose_consistency():
    m = PairwiseModel.ising(0.25)
    c = line([1, 1, 0, 0, 1, 0, 1, 1], "periodic")
    for inner in ((2,), (3,), (2, 3), (3, 4)):
        assert consistency_gap(m, c, inner, (2, 3, 4)) <= 1e-10


def test_compose_renewal_support(rng):
    m = RenewalModel()
    x = np.array([0, 1, 0] + list(rng.integers(0, 2, 30)) + [1, 0, 1])
    c = line(x)
    law, sp = compose_specification(m, c, (17, 18))
    assert sum(law.values()) == pytest.approx(1.0, abs=1e-10)
    assert not sp & {17, 18}


def test_compose_bad_order():
    m = IIDModel()
    with pytest.raises(ValueError):
        compose_specification(m, line([0, 1, 0, 1]), (1, 2), order=(1, 3))


# -- model files ------------------------------------------------------------------

def test_load_models(model_file):
    m = load_model(model_file({"model": "renewal", "params": {"rho1": 0.5, "rho2": 0.25, "c1": 0.5, "c2": 1.5}}))
    assert isinstance(m, RenewalModel)
    m = load_model(model_file({"model": "polygon", "params": {"beta": 0.1, "L": 2}}))
    assert isinstance(m, PolygonModel) and m.range == 4
    m = load_model(model_file({"model": "markov1", "params": {"beta": 0.2, "dim": 2}}))
    assert m.dim == 2
    assert model_from_dict(m.to_json()).to_json() == m.to_json()


@pytest.mark.parametrize("obj,match", [
    ({"model": "voronoi"}, "field 'model'"),
    ({"model": "iid", "params": {"p": [0.5, 0.5]}}, "unknown field params.p"),
    ({"model": "iid", "params": {"probs": [1.0, 0.0]}}, "params"),
    ({"model": "iid", "seedless": False}, "seedless"),
])
def test_model_file_errors(obj, match):
    with pytest.raises(ModelFileError, match=match):
        model_from_dict(obj)


def test_model_file_json_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"model": "iid",\n  "params": {,}}')
    with pytest.raises(ModelFileError, match=r"bad.json:2:\d+"):
        load_model(p)


def test_to_json_round_trip():
    for m in (RenewalModel(), IIDModel((0.2, 0.8)), PolygonModel(PolygonParams(0.2, 2))):
        assert json.loads(json.dumps(m.to_json())) == m.to_json()
