import sys
import textwrap
from fractions import Fraction

import numpy as np
import pytest

from momentcal.auditing import alpha_prime, audit_cells
from momentcal.core import MEAN, FiniteDistribution, PredictorBundle, SetDescriptor, UpdateRecord, iter_cells
from momentcal.evaluation import exact_calibration_audit
from momentcal.finite import DistributionSource, SampleTrainConfig, sample_alternating_descent
from momentcal.oracle import (ExhaustiveOracle, OracleError, StumpOracle, SubprocessOracle,
                              oracle_alternating_descent, oracle_audit_wrapper, refinement_cells, residual_labels)
from momentcal.predicates import All, Box, GroupFamily, Nothing, Ref, stump
from momentcal.synthetic import bernoulli_grid, halves_family, random_box_family, random_grid


def test_residual_examples():
    in_r = np.array([True, True, False])
    rp, rm = residual_labels([0.3, 0.6, 0.2], [0.3, 0.6, 0.9], in_r)
    assert not rp.any() and not rm.any()
    rp, rm = residual_labels(np.ones(3), np.zeros(3), in_r)
    assert list(rp) == [1, 1, 0] and list(rm) == [-1, -1, 0]


def test_residual_identity_exact():
    """E[1_S r+_R] equals P(R&S) (lbar(R&S) - l(R&S)), in exact rational arithmetic."""
    rng = np.random.default_rng(5)
    for _ in range(50):
        N = 8
        mass = rng.integers(1, 9, N)
        mass = mass / mass.sum()
        # dyadic predictions and labels so every float is an exact rational
        pred = rng.integers(0, 9, N) / 8
        obs = rng.integers(0, 9, N) / 8
        R = rng.random(N) < 0.6
        S = rng.random(N) < 0.5
        rp, rm = residual_labels(pred, obs, R)
        F = [Fraction(float(v)) for v in mass]
        lhs_p = sum(F[i] * Fraction(float(rp[i])) for i in range(N) if S[i])
        lhs_m = sum(F[i] * Fraction(float(rm[i])) for i in range(N) if S[i])
        both = [i for i in range(N) if R[i] and S[i]]
        P = sum((F[i] for i in both), Fraction(0))
        if P == 0:
            assert lhs_p == 0 and lhs_m == 0
            continue
        gap = (sum(F[i] * Fraction(float(pred[i])) for i in both) / P
               - sum(F[i] * Fraction(float(obs[i])) for i in both) / P)
        assert lhs_p == P * gap and lhs_m == -P * gap


def test_exhaustive_oracle_examples():
    X = np.array([[0.1], [0.9]])
    fam = GroupFamily([("lo", Box(((0, None, 0.5),))), ("hi", Box(((0, 0.5, None),)))])
    orc = ExhaustiveOracle(fam)
    assert orc.values(X, np.zeros(2), np.ones(2)).tolist() == [0.0, 0.0]
    assert orc.learn(X, np.zeros(2), np.ones(2)) == Ref("lo")  # value 0, lowest index
    assert orc.learn(X, np.array([-1.0, 0.5]), np.ones(2)) == Ref("hi")
    assert orc.learn(X, np.array([-1.0, -0.5]), np.ones(2)) == Nothing()
    single = ExhaustiveOracle([All()])
    assert single.learn(X, np.array([0.2, 0.1]), np.ones(2)) == All()
    with pytest.raises(ValueError):
        ExhaustiveOracle([])


def test_stump_oracle_finds_split():
    X = np.array([[0.1, 0.5], [0.2, 0.5], [0.7, 0.5], [0.8, 0.5]])
    h = StumpOracle(2).learn(X, np.array([-1.0, -1.0, 1.0, 1.0]), np.ones(4))
    assert h == stump(0, (0.2 + 0.7) / 2, 2, upper=True)
    assert StumpOracle(2).learn(X, -np.ones(4), np.ones(4)) == Nothing()
    assert StumpOracle(2).learn(X, np.ones(4), np.ones(4)) == All()


def _wrapper_case(seed, n=20_000):
    rng = np.random.default_rng(seed)
    dist = random_grid(rng, points=12)
    fam = random_box_family(rng, 2, 5)
    b = PredictorBundle(10, 2, (2,), fam)
    for g in rng.choice(fam.names, size=3):
        b.append(UpdateRecord(MEAN, float(rng.choice([-0.2, -0.1, 0.1])), SetDescriptor(Ref(str(g)))))
    st = b.state(dist.X)
    train, check = dist.sample_counts(n, rng), dist.sample_counts(n, rng)
    return dist, fam, st, train, check


def _wrap(st, fam, train, check, alpha, delta, oracle=None, records=None):
    refs = list(refinement_cells(st, train.index, (2,), True))
    v = oracle_audit_wrapper((st.mean[train.index], train.y), (st.mean[check.index], check.y), alpha, delta,
                             train, check, refs, oracle or ExhaustiveOracle(fam),
                             lambda d: st.selector_mask(d)[check.index], records=records)
    return v, refs


def test_wrapper_null_implies_enumeration_null():
    alpha, delta, n = 0.1, 0.05, 20_000
    nulls = 0
    for seed in range(120):
        dist, fam, st, train, check = _wrapper_case(seed, n)
        records = []
        v, refs = _wrap(st, fam, train, check, alpha, delta, records=records)
        assert len(records) <= 2 * len(refs)
        if v is not None:
            continue
        nulls += 1
        idx = check.index
        cells = iter_cells(st.group_masks()[:, idx], st.mean_buckets()[idx], {2: st.moment_buckets(2)[idx]}, 10)
        assert audit_cells(st.mean[idx], check.y, check.counts, cells, alpha_prime(alpha, delta, n), delta) is None
    assert nulls > 5


def test_wrapper_identical_labels_null():
    dist, fam, st, train, check = _wrapper_case(0)
    refs = refinement_cells(st, train.index, (2,), True)
    v = oracle_audit_wrapper((train.y, train.y), (check.y, check.y), 0.1, 0.05, train, check, refs,
                             ExhaustiveOracle(fam), lambda d: st.selector_mask(d)[check.index])
    assert v is None


def test_wrapper_finds_planted_group():
    # labels are 0.75 on the left half and 0.25 on the right; predictions 0.5 hide a 0.25 gap per half
    X = np.array([[0.25], [0.75]])
    dist = FiniteDistribution(X, [0.5, 0.5], [[0.75], [0.25]], [[1.0], [1.0]])
    fam = GroupFamily([("all", All()), ("left", Box(((0, None, 0.5),)))])
    b = PredictorBundle(10, 2, (2,), fam, [UpdateRecord(MEAN, -0.5, SetDescriptor(Ref("all")))])
    st = b.state(dist.X)
    rng = np.random.default_rng(0)
    train, check = dist.sample_counts(10_000, rng), dist.sample_counts(10_000, rng)
    v, _ = _wrap(st, fam, train, check, 0.05, 0.05)
    assert v is not None and v.key.predicate == Ref("left") and v.sign == -1


class _SpyOracle(ExhaustiveOracle):
    def __init__(self, fam):
        super().__init__(fam)
        self.seen = []

    def learn(self, X, r, counts):
        self.seen.append(np.asarray(counts).copy())
        return super().learn(X, r, counts)


def test_oracle_sees_only_train_block():
    dist, fam, st, train, check = _wrapper_case(1)
    spy = _SpyOracle(fam)
    _wrap(st, fam, train, check, 0.1, 0.05, oracle=spy)
    assert spy.seen and all(np.array_equal(c, train.counts) for c in spy.seen)


def test_oracle_mode_matches_sample_mode():
    dist = bernoulli_grid(4, 2)
    fam = GroupFamily([("all", All())])
    for seed in range(3):
        cfg = SampleTrainConfig(0.1, 0.1, 1e-4, 20_000, 10, 4, seed=seed)
        a, ra = sample_alternating_descent(cfg, DistributionSource(dist, seed=seed), fam)
        b, rb = oracle_alternating_descent(cfg, DistributionSource(dist, seed=seed), ExhaustiveOracle(fam), fam)
        assert a.dumps() == b.dumps()
        assert ra.blocks_consumed == rb.blocks_consumed == rb.train_blocks_consumed


def test_stump_oracle_training_passes_audit():
    dist = bernoulli_grid(4, 2)
    fam = halves_family(2)
    n = 10 ** 8  # large enough that alpha' + rho stays well below 1
    cfg = SampleTrainConfig(0.1, 0.1, 1e-4, n, 10, 4)
    b, rep = oracle_alternating_descent(cfg, DistributionSource(dist, seed=0), StumpOracle(2), fam, workers=2)
    assert rep.halt_reason == "converged" and rep.oracle_calls > 0
    level = alpha_prime(0.1, 1e-4, n) + StumpOracle.rho(n, 1e-4, 2)
    assert level < 0.15
    assert exact_calibration_audit(b, dist, fam, level, level).passed


ECHO_ORACLE = textwrap.dedent('''
    import json, sys
    for line in sys.stdin:
        req = json.loads(line)
        if req["d"] != 1:
            print(json.dumps({"error": "only one feature supported"}), flush=True)
            continue
        total = sum(r * c for r, c in zip(req["r"], req["count"]))
        print(json.dumps({"predicate": {"all": True} if total > 0 else {"none": True}}), flush=True)
''')


def test_subprocess_protocol(tmp_path):
    script = tmp_path / "oracle.py"
    script.write_text(ECHO_ORACLE)
    orc = SubprocessOracle([sys.executable, str(script)])
    try:
        X = np.array([[0.1], [0.9]])
        assert orc.learn(X, np.array([0.5, -0.1]), np.array([1, 1])) == All()
        assert orc.learn(X, np.array([-0.5, 0.1]), np.array([1, 1])) == Nothing()
        with pytest.raises(OracleError, match="only one feature"):
            orc.learn(np.zeros((2, 2)), np.zeros(2), np.ones(2, int))
    finally:
        orc.close()
