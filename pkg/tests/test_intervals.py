import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momentcal.core import LookupPredictor
from momentcal.evaluation import exact_coverage
from momentcal.intervals import (CoverInstance, IntervalParams, brute_force_cover, build_cover_instance,
                                 chebyshev_tail, cover_widths, greedy_cover, harmonic,
                                 per_point_interval_from_cover, prediction_interval, width_formula)
from momentcal.predicates import All, GroupFamily
from momentcal.synthetic import beta_grid, halves_family

# Frozen from an independent mpmath evaluation.
WIDTH_REF = 0.5876854249492380195


def test_width_example():
    p = IntervalParams(gamma=0.25, delta=0.1, k=2, alpha=0.005, beta=0.005, eps=0.001)
    assert width_formula(0.01, p, 1000) == pytest.approx(WIDTH_REF, abs=1e-14)


def test_width_limits():
    bare = IntervalParams(gamma=1.0, delta=0.1, k=4)
    huge_m = 10 ** 15
    assert width_formula(0.0081, bare, huge_m) == pytest.approx((0.0081 / 0.1) ** 0.25, abs=1e-6)
    assert width_formula(0.0, bare, 10 ** 18) < 1e-3


def test_param_validation():
    with pytest.raises(ValueError):
        IntervalParams(0.1, 0.0, 2)
    with pytest.raises(ValueError):
        IntervalParams(0.1, 0.1, 3)
    IntervalParams(0.1, 0.1, 3, absolute=True)
    with pytest.raises(ValueError):
        IntervalParams(0.1, 0.1, 2, alpha=-0.1)
    p = IntervalParams.from_exact_training(0.1, 0.05, 10, 4, 0.2, 0.1)
    assert (p.alpha, p.beta, p.eps) == (0.1, 0.05 + 4 * 0.1, 0.4)
    q = IntervalParams.from_sample_training(0.2, 0.3, 10, 2, 0.2, 0.1)
    assert (q.alpha, q.beta, q.eps) == (0.2, 2 * 0.2 + 0.3, 0.2)


_GRID = {"mk": [0.0, 0.01, 0.2], "alpha": [0.0, 0.01, 0.1], "beta": [0.0, 0.05], "eps": [0.0, 0.02],
         "gamma": [0.1, 0.5, 1.0], "m": [5, 50], "delta": [0.05, 0.2]}


def test_width_monotone_on_grid():
    keys = list(_GRID)
    for combo in itertools.product(*_GRID.values()):
        c = dict(zip(keys, combo))
        base = width_formula(c["mk"], IntervalParams(c["gamma"], c["delta"], 2, c["alpha"], c["beta"], c["eps"]),
                             c["m"])
        for key, up in (("mk", 0.01), ("alpha", 0.01), ("beta", 0.01), ("eps", 0.01)):
            d = dict(c, **{key: c[key] + up})
            w = width_formula(d["mk"], IntervalParams(d["gamma"], d["delta"], 2, d["alpha"], d["beta"], d["eps"]),
                              d["m"])
            assert w >= base
        for key, up in (("gamma", 0.05), ("delta", 0.01), ("m", 1)):
            d = dict(c, **{key: min(c[key] + up, 1.0) if key == "gamma" else c[key] + up})
            w = width_formula(d["mk"], IntervalParams(d["gamma"], d["delta"], 2, d["alpha"], d["beta"], d["eps"]),
                              d["m"])
            assert w <= base


def _lookup(mean, mom):
    X = np.arange(len(mean), dtype=float)[:, None]
    return LookupPredictor(X, mean, {2: mom}, 10 ** 9)


def test_interval_centered_and_clipped():
    p = IntervalParams(1.0, 0.5, 2)
    # width = 1/m + ((mk + 1/m)/delta)^(1/2) with m = 1e9, so mk = 0.045 gives 0.3 up to ~1e-8
    iv = prediction_interval(_lookup([0.5], [0.045]), [0.0], p)
    assert (iv.lo, iv.hi) == pytest.approx((0.2, 0.8), abs=1e-7)
    wide = prediction_interval(_lookup([0.5], [0.9]), [0.0], p)
    assert (wide.lo, wide.hi) == (0.0, 1.0)
    assert wide.raw_lo < 0 and wide.raw_hi > 1 and wide.width > 1


def test_chebyshev_examples():
    assert chebyshev_tail(0.25, 2, 1.0) == 0.25
    assert chebyshev_tail(0.25, 2, 0.5) == 1.0
    with pytest.raises(ValueError):
        chebyshev_tail(0.25, 2, 0.0)


@settings(max_examples=200)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.lists(st.floats(0.01, 1), min_size=6, max_size=6),
       st.sampled_from([2, 4, 6]), st.floats(0.01, 1))
def test_chebyshev_dominates_exact_tail(ys, ws, k, t):
    y = np.array(ys)
    w = np.array(ws[: len(ys)])
    w /= w.sum()
    mu = (w * y).sum()
    mk = (w * (y - mu) ** k).sum()
    assert chebyshev_tail(mk, k, t) >= w[np.abs(y - mu) >= t].sum() - 1e-12


def test_truth_predictor_intervals_cover():
    dist = beta_grid()
    fam = halves_family(2)
    for k in (2, 4):
        truth = LookupPredictor.truth(dist, 10, (2, 4))
        p = IntervalParams(0.1, 0.1, k, eps=k / 10)
        rows = exact_coverage(truth, p, dist, fam)
        assert rows and all(r.coverage >= 0.9 for r in rows)


def worked_instance():
    return CoverInstance(np.full(3, 1 / 3), [[1, 1, 0], [0, 1, 1], [1, 1, 1]],
                         [[0.2, 0.2, 0.0], [0.0, 0.3, 0.3], [0.5, 0.5, 0.5]])


def test_worked_cover():
    inst = worked_instance()
    g = greedy_cover(inst)
    assert g.chosen == (0, 1) and g.objective == pytest.approx(0.26666666666666666, abs=1e-12)
    assert brute_force_cover(inst).objective == pytest.approx(g.objective)
    assert list(cover_widths(inst, g)) == [0.2, 0.3, 0.3]
    inst.mean = np.array([0.5, 0.5, 0.5])
    assert per_point_interval_from_cover(inst, g, 1) == pytest.approx((0.2, 0.8))
    assert per_point_interval_from_cover(inst, g, 0) == pytest.approx((0.3, 0.7))


def test_single_set_cover():
    inst = CoverInstance(np.array([0.2, 0.8]), [[1, 1]], [[0.1, 0.4]])
    g = greedy_cover(inst)
    assert g.chosen == (0,) and g.objective == pytest.approx(0.2 * 0.1 + 0.8 * 0.4)


def test_uncovered_point_rejected():
    with pytest.raises(ValueError, match="point 2"):
        CoverInstance(np.full(3, 1 / 3), [[1, 1, 0]], [[0.1, 0.1, 0.0]])
    inst = worked_instance()
    from momentcal.intervals import Cover
    with pytest.raises(ValueError):
        cover_widths(inst, Cover((0,), 0.0))


def _random_instance(rng, N, S):
    members = rng.random((S, N)) < 0.4
    members[rng.integers(S), :] |= ~members.any(axis=0)
    mass = rng.dirichlet(np.ones(N))
    return CoverInstance(mass, members, rng.random((S, N)))


def test_objective_and_coverage_submodular():
    rng = np.random.default_rng(2)
    for _ in range(20):
        inst = _random_instance(rng, 6, 6)
        for f in (inst.objective, inst.coverage):
            for r in range(6):
                for B in itertools.combinations(range(6), r):
                    for A_size in range(len(B) + 1):
                        for A in itertools.combinations(B, A_size):
                            for e in set(range(6)) - set(B):
                                gain_a = f(list(A) + [e]) - f(list(A))
                                gain_b = f(list(B) + [e]) - f(list(B))
                                assert gain_a >= gain_b - 1e-12 and gain_b >= -1e-12


def test_greedy_feasible_and_bounded():
    rng = np.random.default_rng(4)
    for _ in range(100):
        inst = _random_instance(rng, int(rng.integers(2, 9)), int(rng.integers(1, 7)))
        g, opt = greedy_cover(inst), brute_force_cover(inst)
        assert inst.feasible(g.chosen)
        assert g.objective <= harmonic(inst.max_set_size) * opt.objective + 1e-12


def test_build_cover_instance_single_group():
    dist = beta_grid()
    fam = GroupFamily([("all", All())])
    truth = LookupPredictor.truth(dist, 10, (2,))
    inst = build_cover_instance(truth, fam, dist.X, dist.mass, {2: IntervalParams(0.01, 0.1, 2)})
    assert inst.members.sum(axis=0).tolist() == [1] * len(dist)  # moment cells partition the domain
    with pytest.raises(ValueError):
        build_cover_instance(truth, fam, dist.X, dist.mass, {2: IntervalParams(1.0, 0.1, 2)})
