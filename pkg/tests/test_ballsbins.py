import itertools
import math

import numpy as np
import pytest

from matchlab.errors import ValidationError
from matchlab.ballsbins import (
    BinsConfig,
    BinsState,
    check_majorization,
    dkw_band,
    dominance_experiment,
    one_plus_eps_thresholds,
    proportional_config,
    run_process,
    slot_probabilities,
    step_one_plus_eps,
    step_two_choice,
    tilted_config,
)
from matchlab.sampling import exponential_weights, stream_rng, unit_weights


def enumerated_slot_probs(config: BinsConfig, state: BinsState) -> np.ndarray:
    """Oracle: enumerate all ordered slot pairs; the ball lands at the
    less-loaded slot's bin, i.e. the larger rank of the pair."""
    weights = np.asarray(config.weights)
    v = state.loads(weights)
    order = np.lexsort((np.arange(config.n), -v))
    pi = np.concatenate(
        [np.full(weights[b], config.selection_probs[b] / weights[b]) for b in order]
    )
    total = config.total_weight
    p = np.zeros(total)
    for r1, r2 in itertools.product(range(total), repeat=2):
        p[max(r1, r2)] += pi[r1] * pi[r2]
    return p


def test_config_validation():
    with pytest.raises(ValidationError):
        proportional_config([0, 2], unit_weights())
    with pytest.raises(ValidationError):
        BinsConfig((1, 2), np.array([0.9, 0.2]), unit_weights())
    with pytest.raises(ValidationError):
        proportional_config([1, 2], unit_weights(), a=1.5)


def test_proportional_bias_is_unit():
    cfg = proportional_config([1, 2, 3], unit_weights())
    assert cfg.bias.alpha == 1.0 and cfg.bias.beta == 1.0


def test_step_two_choice_single_bin():
    cfg = proportional_config([4], unit_weights())
    state = BinsState.fresh(1)
    rng = stream_rng(0)
    for _ in range(50):
        assert step_two_choice(state, cfg, rng) == 0
    assert state.gap(cfg.weights) == 0.0


class FixedUniforms:
    """Stands in for a Generator; returns canned uniforms in order."""

    def __init__(self, us):
        self.us = list(us)

    def random(self, k=None):
        if k is None:
            return self.us.pop(0)
        out = self.us[:k]
        del self.us[:k]
        return np.array(out)


def test_step_two_choice_picks_smaller_load():
    cfg = BinsConfig((1, 1), np.array([0.5, 0.5]), unit_weights())
    state = BinsState(w=np.array([5.0, 3.0]), t=8, total=8.0)
    # uniforms 0.1 -> bin 0, 0.9 -> bin 1; loads (5,3) so bin 1 wins
    assert step_two_choice(state, cfg, FixedUniforms([0.1, 0.9])) == 1


def test_two_bins_weighted_case_enumeration():
    # N = (1,2), proportional selection (cum probs 1/3, 1): after one ball
    # lands in bin 0 (v = (1, 0)), any pair containing bin 1 sends the next
    # ball to bin 1; the (0,0) pair stays at bin 0
    expected = {(0.1, 0.1): 0, (0.1, 0.9): 1, (0.9, 0.1): 1, (0.9, 0.9): 1}
    for (u1, u2), want in expected.items():
        cfg = proportional_config([1, 2], unit_weights())
        state = BinsState(w=np.array([1.0, 0.0]), t=1, total=1.0)
        assert step_two_choice(state, cfg, FixedUniforms([u1, u2])) == want


def test_step_loop_equals_run_process():
    for wd in (unit_weights(), exponential_weights(3.0)):
        cfg = proportional_config([1, 2, 3, 4], wd)
        res = run_process(cfg, 400, seed=5, sample_schedule=[400])
        rng = stream_rng(5)
        state = BinsState.fresh(cfg.n)
        for _ in range(400):
            step_two_choice(state, cfg, rng)
        assert np.array_equal(state.w, res.final_w)


def test_one_plus_eps_thresholds():
    phis = one_plus_eps_thresholds(2, 1.0)
    assert phis == pytest.approx([0.25, 1.0])
    with pytest.raises(ValidationError):
        one_plus_eps_thresholds(4, 0.0)
    with pytest.raises(ValidationError):
        one_plus_eps_thresholds(4, 1.5)


def test_one_plus_eps_most_loaded_quarter():
    # N=2, eps=1: most-loaded bin receives with probability phi_1 = 1/4
    rng = stream_rng(13)
    hits = 0
    trials = 40_000
    for _ in range(trials):
        state = BinsState(w=np.array([9.0, 1.0]), t=10, total=10.0)
        hits += step_one_plus_eps(state, 1.0, rng) == 0
    assert abs(hits / trials - 0.25) < 0.01


def test_one_plus_eps_rank_ties_stable():
    # loads (2,2,1): the top-rank tie resolves to the lower bin index, so
    # phi thresholds (1/9, 4/9, 1) map uniforms to bins 0, 1, 2 in order
    for u, want in ((0.05, 0), (0.2, 1), (0.9, 2)):
        state = BinsState(w=np.array([2.0, 2.0, 1.0]))
        assert step_one_plus_eps(state, 1.0, FixedUniforms([u])) == want


def test_one_plus_eps_small_eps_near_uniform():
    # allocation probabilities approach 1/N as eps -> 0
    phis = one_plus_eps_thresholds(10, 1e-4)
    diffs = np.diff(phis, prepend=0.0)
    assert np.max(np.abs(diffs - 0.1)) < 1e-3


def test_slot_probabilities_uniform_n3():
    cfg = proportional_config([1, 1, 1], unit_weights())
    state = BinsState(w=np.array([3.0, 2.0, 1.0]))
    sp = slot_probabilities(cfg, state)
    assert sp.p == pytest.approx([1 / 9, 3 / 9, 5 / 9], abs=1e-15)
    assert sp.psi[-1] == pytest.approx(1.0, abs=1e-12)
    assert sp.p_uniform == pytest.approx([1 / 9, 3 / 9, 5 / 9], abs=1e-15)


def test_slot_probabilities_match_enumeration_oracle():
    rng = np.random.Generator(np.random.Philox(8))
    for _ in range(25):
        n = int(rng.integers(1, 5))
        weights = rng.integers(1, 4, size=n)
        tilt = float(rng.random() * 0.5)
        cfg = tilted_config(weights, tilt, unit_weights())
        state = BinsState(w=rng.random(n) * 5.0)
        sp = slot_probabilities(cfg, state)
        oracle = enumerated_slot_probs(cfg, state)
        assert sp.p == pytest.approx(oracle, abs=1e-12)


def test_lemma48_sandwich_sampled():
    rng = np.random.Generator(np.random.Philox(9))
    for _ in range(100):
        n = int(rng.integers(2, 21))
        weights = rng.integers(1, 11, size=n)
        cfg = tilted_config(weights, float(rng.random() * 0.4), unit_weights())
        state = BinsState(w=rng.random(n) * 3.0)
        sp = slot_probabilities(cfg, state)
        alpha, beta = cfg.bias.alpha, cfg.bias.beta
        assert np.all(sp.p >= sp.p_uniform / alpha**2 - 1e-12)
        assert np.all(sp.p <= beta**2 * sp.p_uniform + 1e-12)


def test_majorization_basics():
    assert check_majorization([3, 1, 0], [3, 1, 0])
    assert check_majorization([3, 1, 0], [2, 1, 1])
    assert not check_majorization([2, 1, 1], [3, 1, 0])
    with pytest.raises(ValidationError):
        check_majorization([1, 2], [1, 2, 3])


def test_majorization_totals_flag():
    assert not check_majorization([5, 1], [2, 1])
    assert check_majorization([5, 1], [2, 1], require_equal_totals=False)


def test_majorization_averaging_property():
    # replacing a subset by its mean is always majorized by the original
    rng = np.random.Generator(np.random.Philox(10))
    for _ in range(50):
        x = rng.random(8)
        k = int(rng.integers(1, 9))
        subset = rng.choice(8, size=k, replace=False)
        y = x.copy()
        y[subset] = x[subset].mean()
        assert check_majorization(x, y)


def test_round_robin_oracle_gap_zero():
    # forced round robin over equal bins, m divisible by n: gap is exactly 0
    n, m = 4, 100
    w = np.zeros(n)
    for t in range(m):
        w[t % n] += 1.0
    state = BinsState(w=w, t=m, total=float(m))
    assert state.gap([1] * n) == 0.0


def test_run_process_centering_and_gamma_floor():
    cfg = tilted_config([1, 2, 3, 4, 5], 0.1, exponential_weights(1.0), a=0.05)
    res = run_process(cfg, 20_000, seed=3)
    assert res.max_center_residual < 1e-9
    n_slots = cfg.total_weight
    for _, phi, psi, gamma in res.potential.samples:
        assert gamma == pytest.approx(phi + psi, rel=1e-12)
        assert gamma >= 2.0 * n_slots - 1e-9


def test_run_process_chebyshev_diagnostic():
    cfg = proportional_config([1, 1], unit_weights())
    res = run_process(cfg, 1000, seed=1)
    assert res.chebyshev_z == 0.0
    cfg = proportional_config([1, 1], exponential_weights(1.0))
    res = run_process(cfg, 10_000, seed=1)
    assert 0.0 <= res.chebyshev_z < 5.0


def test_run_process_schedule_validation():
    cfg = proportional_config([1, 1], unit_weights())
    with pytest.raises(ValidationError):
        run_process(cfg, 10, seed=0, sample_schedule=[0, 5])
    with pytest.raises(ValidationError):
        run_process(cfg, 10, seed=0, sample_schedule=[11])


def test_one_choice_ablation_runs():
    cfg = proportional_config([1] * 10, unit_weights())
    res = run_process(cfg, 5000, seed=2, sample_schedule=[5000], one_choice=True)
    assert res.final_w.sum() == pytest.approx(5000.0)
    assert res.gap.final > 0


def test_gap_m_independence_exponential_balls():
    # with Exp(1) balls and bias within alpha < sqrt(5/4), beta < sqrt(4/3),
    # the median gap at m=1e6 exceeds the median at m=1e4 by at most 5
    from matchlab.sampling import tilt_for_bias

    rng = np.random.Generator(np.random.Philox(17))
    weights = rng.integers(1, 13, size=20)
    tilt = tilt_for_bias(weights, alpha_max=1.09, beta_max=1.11)
    cfg = tilted_config(weights, tilt, exponential_weights(1.0))
    gap4, gap6 = [], []
    for seed in range(50):
        res = run_process(cfg, 10**6, seed=seed, sample_schedule=[10**4, 10**6])
        gap4.append(res.gap.at(10**4))
        gap6.append(res.gap.at(10**6))
    assert np.median(gap6) <= np.median(gap4) + 5.0


def test_dkw_band_value():
    assert dkw_band(100_000, 0.001) == pytest.approx(math.sqrt(math.log(2000.0) / 2e5))


def test_dominance_small_certified():
    cfg = proportional_config([1, 2, 3], unit_weights())
    rep = dominance_experiment(cfg, eps=1.0, m=8, runs=4000, seed=5)
    assert rep.certified and rep.eps_bound == 1.0
    assert rep.dominated_within_band
    assert rep.mean_gap_one_plus_eps >= rep.mean_gap_slot - rep.band


def test_dominance_uncertified_when_bias_too_strong():
    cfg = tilted_config([1, 5], 3.0, unit_weights())
    from matchlab.geo import f_alpha_beta

    assert f_alpha_beta(cfg.bias.alpha, cfg.bias.beta) < 1.5
    rep = dominance_experiment(cfg, eps=0.9, m=4, runs=500, seed=6)
    assert not rep.certified


def test_dominance_requires_unit_balls():
    cfg = proportional_config([1, 2], exponential_weights(1.0))
    with pytest.raises(ValidationError):
        dominance_experiment(cfg, eps=1.0, m=4, runs=10, seed=0)
