"""End-to-end protocol tests: completeness, soundness, reproducibility, Eve."""

import math

import numpy as np
import pytest

from poisson_ident.channel import WiretapChannelPair
from poisson_ident.idcode import Identity, collision_bound, tag_batch
from poisson_ident.phycode import CodeBudget, InfeasibleCodeError, _decode_batch
from poisson_ident.simkit import (
    _trial_draws,
    _verdicts,
    build_system,
    estimate_errors,
    eve_advantage,
    receive_and_verify,
    run_trial,
    scaling_study,
    send,
    wilson_interval,
)

BUDGET = CodeBudget(16, 0.75, 0.957)


def clean_system(lam_b=0.1, lam_e=2.0, peak=20.0, seed=31, bin_size=1):
    pair = WiretapChannelPair.from_dark_currents(lam_b, lam_e)
    return build_system(BUDGET, pair, peak, seed=seed, bin_size=bin_size)


class TestWilson:
    def test_contains_rate(self):
        for k, n in [(0, 10), (10, 10), (3, 17), (1, 1)]:
            lo, hi = wilson_interval(k, n)
            assert 0.0 <= lo <= k / n <= hi <= 1.0

    def test_shrinks_with_samples(self):
        lo1, hi1 = wilson_interval(10, 100)
        lo2, hi2 = wilson_interval(100, 1000)
        assert hi2 - lo2 < hi1 - lo1


class TestSystemWiring:
    def test_j_map_round_trip(self):
        system = clean_system()
        q1, q2 = system.scheme.q1, system.scheme.q2
        seen = set()
        for idx in range(q1 * q2):
            j = system.j_from_index(idx)
            assert system.j_index(j) == idx
            seen.add((j.j1, j.j2))
        assert len(seen) == q1 * q2

    def test_sizes_cover_spaces(self):
        system = clean_system()
        assert system.tx_code.message_count == system.scheme.coloring_space
        assert system.wt_code.secure_message_count == system.scheme.q2

    def test_infeasible_color_space_rejected(self):
        # n=4 -> 2 wiretap uses, but a large epsilon forces many colors
        pair = WiretapChannelPair.from_dark_currents(0.1, 2.0)
        with pytest.raises(InfeasibleCodeError):
            build_system(CodeBudget(4, 0.8, 0.957), pair, 20.0, seed=1)


class TestSend:
    def test_deterministic(self):
        system = clean_system()
        ident = Identity((3, 7))
        a = send(system, ident, seed=5)
        b = send(system, ident, seed=5)
        assert all(np.array_equal(x, y) for x, y in zip(a.y_obs, b.y_obs))
        assert all(np.array_equal(x, y) for x, y in zip(a.z_obs, b.z_obs))
        assert a.j == b.j and a.color == b.color

    def test_block_lengths_match_both_receivers(self):
        system = clean_system()
        out = send(system, Identity((0, 1)), seed=9)
        assert out.y_obs[0].shape == (16,) and out.y_obs[1].shape == (4,)
        assert out.z_obs[0].shape == (16,) and out.z_obs[1].shape == (4,)

    def test_noise_free_limit_recovers_pair(self):
        system = clean_system(lam_b=0.0, lam_e=1.0)
        errors = 0
        for seed in range(200):
            out = send(system, Identity((5, 2)), seed=seed)
            j_hat = _decode_batch(system.tx_code.codewords, out.y_obs[0][None, :], system.pair.main)[0]
            assert out.color < system.wt_code.secure_message_count
            if int(j_hat) != system.j_index(out.j):
                errors += 1
        assert errors == 0


class TestReceiveAndVerify:
    def test_bypass_channel_completeness(self):
        # feed exact codeword amplitudes as counts: decoding is forced correct
        system = clean_system(lam_b=0.0, lam_e=1.0)
        rng = np.random.default_rng(4)
        for _ in range(100):
            coeffs = tuple(int(c) for c in rng.integers(0, system.scheme.q1, size=system.scheme.k1))
            ident = Identity(coeffs)
            out = send(system, ident, seed=int(rng.integers(0, 2 ** 32)))
            j_idx = system.j_index(out.j)
            clean_obs = (
                system.tx_code.codewords[j_idx],
                system.wt_code.codewords[out.color * system.wt_code.bin_size],
            )
            assert receive_and_verify(system, ident, clean_obs, system.pair.main) is True

    def test_verdict_is_pure(self):
        system = clean_system()
        obs = (np.zeros(16), np.zeros(4))
        first = receive_and_verify(system, Identity((1, 2)), obs, system.pair.main)
        assert receive_and_verify(system, Identity((1, 2)), obs, system.pair.main) == first

    def test_wrong_identity_rejected_at_collision_rate(self):
        system = clean_system(lam_b=0.0, lam_e=1.0)
        rng = np.random.default_rng(8)
        yes = 0
        trials = 2000
        for t in range(trials):
            sent_c = tuple(int(c) for c in rng.integers(0, 11, size=2))
            while True:
                other_c = tuple(int(c) for c in rng.integers(0, 11, size=2))
                if other_c != sent_c:
                    break
            out = send(system, Identity(sent_c), seed=t)
            if receive_and_verify(system, Identity(other_c), out.y_obs, system.pair.main):
                yes += 1
        bound = collision_bound(system.scheme)
        sigma = math.sqrt(bound * (1 - bound) / trials)
        assert yes / trials <= bound + 3 * sigma


class TestEstimateErrors:
    def test_noise_free_rates(self):
        system = clean_system(lam_b=0.0, lam_e=1.0)
        report = estimate_errors(system, 10_000, seed=99)
        assert report.type1_rate < 1e-3
        sigma = math.sqrt(report.collision_bound * (1 - report.collision_bound) / report.trials)
        assert report.type2_rate <= report.collision_bound + 3 * sigma

    def test_type2_bounded_by_collisions_plus_decode_errors(self):
        system = clean_system(lam_b=0.1, lam_e=2.0, peak=8.0)
        report = estimate_errors(system, 5000, seed=7)
        decode_rate = (report.j_decode_errors + report.color_decode_errors) / report.trials
        sigma = math.sqrt(max(report.type2_rate * (1 - report.type2_rate), 1e-8) / report.trials)
        assert report.type2_rate <= report.collision_bound + decode_rate + 3 * sigma

    def test_single_trial_boundary(self):
        system = clean_system()
        report = estimate_errors(system, 1, seed=0)
        assert report.type1_rate in (0.0, 1.0)
        assert report.type2_rate in (0.0, 1.0)
        assert report.type1_ci[0] <= report.type1_rate <= report.type1_ci[1]

    def test_degenerate_noisy_regime_well_formed(self):
        pair = WiretapChannelPair.from_dark_currents(1000.0, 1000.0)
        system = build_system(CodeBudget(16, 0.3, 0.6), pair, 1.0, seed=2)
        report = estimate_errors(system, 200, seed=5)
        assert 0.0 <= report.type1_rate <= 1.0
        assert report.type1_ci[0] <= report.type1_rate <= report.type1_ci[1]
        assert report.type2_ci[0] <= report.type2_rate <= report.type2_ci[1]

    def test_reports_reproducible(self):
        system = clean_system()
        a = estimate_errors(system, 300, seed=12)
        b = estimate_errors(system, 300, seed=12)
        assert a == b

    def test_distinct_seeds_distinct_streams(self):
        system = clean_system()
        a = _trial_draws(system, 1, 0, with_eve=False)
        b = _trial_draws(system, 2, 0, with_eve=False)
        assert any(not np.array_equal(x, y) for x, y in zip(a[:6], b[:6]))

    def test_order_invariance(self):
        system = clean_system()
        trials, seed = 400, 21
        report = estimate_errors(system, trials, seed)
        order = np.random.default_rng(0).permutation(trials)
        sent = np.empty((trials, system.scheme.k1), dtype=np.int64)
        other = np.empty_like(sent)
        y_tx = np.empty((trials, 16))
        y_wt = np.empty((trials, 4))
        for pos, t in enumerate(order):
            draws = _trial_draws(system, seed, int(t), with_eve=False)
            sent[pos], other[pos], y_tx[pos], y_wt[pos] = draws[0], draws[1], draws[4], draws[5]
        j_hat = _decode_batch(system.tx_code.codewords, y_tx, system.pair.main)
        color_hat = _decode_batch(system.wt_code.codewords, y_wt, system.pair.main) // system.wt_code.bin_size
        type1 = int((~_verdicts(system, sent, j_hat, color_hat)).sum())
        type2 = int(_verdicts(system, other, j_hat, color_hat).sum())
        assert (type1, type2) == (report.type1_errors, report.type2_errors)

    def test_fixed_pair_mode(self):
        system = clean_system(lam_b=0.0, lam_e=1.0)
        sent, other = Identity((1, 2)), Identity((3, 4))
        report = estimate_errors(system, 500, seed=3, fixed_pair=(sent, other))
        assert report.type1_rate < 1e-2
        with pytest.raises(ValueError):
            estimate_errors(system, 10, seed=3, fixed_pair=(sent, sent))

    def test_run_trial_outcomes(self):
        system = clean_system()
        same, other = run_trial(system, seed=99, t=0)
        assert same.truth is True and other.truth is False
        assert same.decoded_j == other.decoded_j

    def test_trials_validated(self):
        with pytest.raises(ValueError):
            estimate_errors(clean_system(), 0, seed=1)


class TestEveAdvantage:
    def test_identical_channels_overlapping_cis(self):
        pair = WiretapChannelPair.from_dark_currents(1.0, 1.0)
        system = build_system(CodeBudget(16, 0.6, 0.9), pair, 12.0, seed=3)
        eve = eve_advantage(system, 3000, seed=9)
        assert eve.bob_ci[0] <= eve.eve_ci[1] and eve.eve_ci[0] <= eve.bob_ci[1]

    def test_blinded_eve_sits_at_collision_baseline(self):
        pair = WiretapChannelPair.from_dark_currents(0.1, 2000.0)
        system = build_system(BUDGET, pair, 5.0, seed=31)
        eve = eve_advantage(system, 4000, seed=55)
        sigma = math.sqrt(eve.collision_bound * (1 - eve.collision_bound) / eve.trials)
        assert abs(eve.eve_yes_rate - eve.collision_bound) <= 3 * sigma
        assert eve.leakage is None  # enumeration guard rejects the huge output window

    def test_leakage_present_when_guard_allows(self):
        system = clean_system()
        eve = eve_advantage(system, 50, seed=1)
        assert eve.leakage is not None
        assert eve.leakage.bits >= 0.0

    def test_advantage_definition(self):
        system = clean_system()
        eve = eve_advantage(system, 100, seed=2)
        assert eve.advantage == pytest.approx(eve.eve_yes_rate - eve.collision_bound)


class TestScalingStudy:
    def test_rows_and_growth(self):
        pair = WiretapChannelPair.from_dark_currents(0.1, 2.0)
        budgets = [CodeBudget(n, 0.4, 1.0) for n in (8, 11, 14)]
        rows = scaling_study(budgets, pair, 20.0, seed=5, trials=60)
        assert len(rows) == 3
        counts = [r.identity_count for r in rows]
        assert counts == sorted(counts) and len(set(counts)) == 3
        for r in rows:
            assert r.feasible
            assert r.log2_log2 > 0
            assert r.llog_per_n == pytest.approx(r.log2_log2 / r.n)
            assert 0 <= r.type1_rate <= 1 and 0 <= r.type2_rate <= 1

    def test_single_budget_single_row(self):
        pair = WiretapChannelPair.from_dark_currents(0.1, 2.0)
        rows = scaling_study([CodeBudget(16, 0.75, 0.957)], pair, 20.0, seed=5, trials=40)
        assert len(rows) == 1

    def test_infeasible_row_marked_not_fatal(self):
        pair = WiretapChannelPair.from_dark_currents(0.1, 2.0)
        budgets = [CodeBudget(5, 0.2, 1.0), CodeBudget(16, 0.4, 1.0)]
        rows = scaling_study(budgets, pair, 20.0, seed=5, trials=40)
        assert rows[0].feasible is False and rows[0].reason
        assert rows[0].identity_count > 0  # scheme columns still recorded
        assert rows[1].feasible is True

    def test_capped_flag(self):
        pair = WiretapChannelPair.from_dark_currents(0.1, 2.0)
        rows = scaling_study([CodeBudget(36, 0.4, 1.0)], pair, 20.0, seed=5, trials=10,
                             scheme_cap=2 ** 8)
        assert rows[0].capped  # ideal 2^{21.6} blows past the capped q1 q2
