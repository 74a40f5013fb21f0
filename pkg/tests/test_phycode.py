"""Physical-layer code tests: builders, ML decoding, binning, exact leakage."""

import itertools

import numpy as np
import pytest

from poisson_ident.channel import PoissonChannel, WiretapChannelPair
from poisson_ident.phycode import (
    CodeBudget,
    EnumerationInfeasibleError,
    InfeasibleCodeError,
    TransmissionCodebook,
    build_transmission_code,
    build_wiretap_code,
    code_mutual_information,
    exact_leakage,
    ml_decode,
    wiretap_decode,
    wiretap_encode,
)

BUDGET16 = CodeBudget(16, 0.75, 0.96)


class TestBudget:
    def test_block_split(self):
        assert BUDGET16.wiretap_block_length == 4
        assert BUDGET16.total_length == 20
        assert CodeBudget(10, 0.2, 1.0).wiretap_block_length == 4  # ceil(sqrt(10))

    def test_ideal_sizes(self):
        b = CodeBudget(16, 0.25, 1.0)
        assert b.ideal_transmission_size == 2 ** 12
        assert b.ideal_wiretap_size == 2  # ceil(2^(4*0.25))

    def test_validation(self):
        with pytest.raises(ValueError):
            CodeBudget(3, 0.2, 1.0)
        with pytest.raises(ValueError):
            CodeBudget(16, 1.0, 1.0)


class TestTransmissionCode:
    def test_deterministic_and_distinct(self):
        a = build_transmission_code(CodeBudget(8, 0.5, 1.0), 5.0, seed=3, message_count=4)
        b = build_transmission_code(CodeBudget(8, 0.5, 1.0), 5.0, seed=3, message_count=4)
        assert np.array_equal(a.codewords, b.codewords)
        assert len({row.tobytes() for row in a.codewords}) == 4
        assert set(np.unique(a.codewords)) <= {0.0, 5.0}

    def test_pigeonhole_rejected(self):
        with pytest.raises(InfeasibleCodeError):
            build_transmission_code(CodeBudget(4, 0.5, 1.0), 5.0, seed=0, message_count=32)

    def test_budget_derived_size_capped(self):
        code = build_transmission_code(CodeBudget(16, 0.25, 1.0), 5.0, seed=1, cap=64)
        assert code.message_count == 64

    def test_too_small_rejected(self):
        with pytest.raises(InfeasibleCodeError):
            build_transmission_code(CodeBudget(16, 0.5, 1.0), 5.0, seed=0, message_count=1)


class TestMlDecode:
    def test_recovers_expected_observations(self):
        code = build_transmission_code(CodeBudget(16, 0.5, 1.0), 10.0, seed=3, message_count=8)
        ch = PoissonChannel(0.1)
        for m in range(8):
            y = code.codewords[m]  # counts at the expected intensity, dark current aside
            assert ml_decode(code, y, ch) == m

    def test_monte_carlo_high_amplitude(self):
        code = build_transmission_code(CodeBudget(16, 0.5, 1.0), 10.0, seed=3, message_count=8)
        ch = PoissonChannel(0.1)
        rng = np.random.Generator(np.random.PCG64(17))
        trials, errors = 10_000, 0
        from poisson_ident.channel import sample_with_rng
        from poisson_ident.phycode import _decode_batch

        sent = rng.integers(0, 8, size=trials)
        obs = np.vstack([sample_with_rng(ch, code.codewords[m], rng) for m in sent])
        decoded = _decode_batch(code.codewords, obs, ch)
        errors = int((decoded != sent).sum())
        assert errors / trials < 1e-3

    def test_tie_breaks_to_lowest_index(self):
        # both codewords impossible under lambda=0 with symmetric scores
        code = TransmissionCodebook(
            block_length=2, message_count=2,
            codewords=np.array([[0.0, 5.0], [5.0, 0.0]]), peak=5.0, seed=0,
        )
        assert ml_decode(code, [2, 2], PoissonChannel(0.0)) == 0

    def test_all_impossible_decodes_to_zero(self):
        code = TransmissionCodebook(
            block_length=2, message_count=3,
            codewords=np.array([[0.0, 0.0], [0.0, 5.0], [5.0, 0.0]]), peak=5.0, seed=0,
        )
        # positive counts on both positions: every codeword has a zero-mean symbol
        # somewhere, so all likelihoods are -inf and the lowest index wins
        assert ml_decode(code, [7, 7], PoissonChannel(0.0)) == 0

    def test_single_message_codebook(self):
        code = TransmissionCodebook(
            block_length=3, message_count=1,
            codewords=np.array([[5.0, 0.0, 5.0]]), peak=5.0, seed=0,
        )
        assert ml_decode(code, [0, 0, 0], PoissonChannel(1.0)) == 0

    def test_matches_sequence_log_likelihood_ordering(self):
        code = build_transmission_code(CodeBudget(8, 0.5, 1.0), 4.0, seed=9, message_count=6)
        ch = PoissonChannel(0.7)
        rng = np.random.Generator(np.random.PCG64(5))
        for _ in range(50):
            y = rng.integers(0, 9, size=8)
            scores = [ch.sequence_log_likelihood(cw, y) for cw in code.codewords]
            assert ml_decode(code, y, ch) == int(np.argmax(scores))

    def test_length_mismatch(self):
        code = build_transmission_code(CodeBudget(8, 0.5, 1.0), 4.0, seed=9, message_count=6)
        with pytest.raises(ValueError):
            ml_decode(code, [0, 0], PoissonChannel(0.5))


class TestWiretapCode:
    def test_structure(self):
        code = build_wiretap_code(BUDGET16, 5.0, 2, seed=11, secure_message_count=2)
        assert code.block_length == 4
        assert code.codewords.shape == (4, 4)
        assert len({r.tobytes() for r in code.codewords}) == 4
        assert code.globally_distinct
        assert code.bin_codewords(1).shape == (2, 4)

    def test_bin_saturation_allows_overlap(self):
        code = build_wiretap_code(CodeBudget(4, 0.5, 1.0), 5.0, 4, seed=1, secure_message_count=2)
        assert not code.globally_distinct
        for k in range(2):
            rows = code.bin_codewords(k)
            assert len({r.tobytes() for r in rows}) == 4  # distinct within the bin
            assert {r.tobytes() for r in rows} == {r.tobytes() for r in code.bin_codewords(0)}

    def test_overfull_bin_rejected(self):
        with pytest.raises(InfeasibleCodeError):
            build_wiretap_code(CodeBudget(4, 0.5, 1.0), 5.0, 5, seed=1, secure_message_count=2)

    def test_encode_stays_in_bin(self):
        code = build_wiretap_code(BUDGET16, 5.0, 2, seed=11, secure_message_count=2)
        for seed in range(20):
            cw = wiretap_encode(code, 1, seed)
            assert any(np.array_equal(cw, row) for row in code.bin_codewords(1))

    def test_encode_r1_ignores_seed(self):
        code = build_wiretap_code(BUDGET16, 5.0, 1, seed=11, secure_message_count=2)
        assert np.array_equal(wiretap_encode(code, 0, 1), wiretap_encode(code, 0, 999))

    def test_encode_uniform_over_bin(self):
        code = build_wiretap_code(BUDGET16, 5.0, 4, seed=11, secure_message_count=2)
        counts = np.zeros(4, dtype=int)
        for seed in range(10_000):
            cw = wiretap_encode(code, 0, seed)
            idx = next(i for i, row in enumerate(code.bin_codewords(0)) if np.array_equal(cw, row))
            counts[idx] += 1
        sigma = np.sqrt(10_000 * 0.25 * 0.75)
        assert np.all(np.abs(counts - 2500) <= 3 * sigma)

    def test_encode_range_check(self):
        code = build_wiretap_code(BUDGET16, 5.0, 1, seed=11, secure_message_count=2)
        with pytest.raises(ValueError):
            wiretap_encode(code, 2, 0)

    def test_bin_decoding_error_rate(self):
        # n''=2, M''=2, R=2, A=8, lambda_B=0.1: bin decoding mostly correct
        from poisson_ident.channel import sample_with_rng

        code = build_wiretap_code(CodeBudget(4, 0.5, 1.0), 8.0, 2, seed=2, secure_message_count=2)
        ch = PoissonChannel(0.1)
        rng = np.random.Generator(np.random.PCG64(23))
        errors = 0
        trials = 10_000
        for _ in range(trials):
            k = int(rng.integers(0, 2))
            cw = code.codewords[k * 2 + int(rng.integers(0, 2))]
            z = sample_with_rng(ch, cw, rng)
            if wiretap_decode(code, z, ch) != k:
                errors += 1
        assert errors / trials < 0.05

    def test_r1_decode_agrees_with_flat_ml(self):
        code = build_wiretap_code(CodeBudget(4, 0.5, 1.0), 6.0, 1, seed=5, secure_message_count=4)
        flat = TransmissionCodebook(
            block_length=2, message_count=4, codewords=code.codewords, peak=6.0, seed=5
        )
        ch = PoissonChannel(0.3)
        for y in itertools.product(range(15), repeat=2):
            assert wiretap_decode(code, list(y), ch) == ml_decode(flat, list(y), ch)


class TestExactLeakage:
    PAIR = WiretapChannelPair.from_dark_currents(0.2, 1.0)

    def test_single_message_leaks_nothing(self):
        code = build_wiretap_code(CodeBudget(4, 0.5, 1.0), 6.0, 2, seed=4, secure_message_count=1)
        assert exact_leakage(code, self.PAIR).bits == 0.0

    def test_binning_reduces_leakage(self):
        budget = CodeBudget(4, 0.5, 1.0)
        r1 = build_wiretap_code(budget, 6.0, 1, seed=42, secure_message_count=2)
        r4 = build_wiretap_code(budget, 6.0, 4, seed=42, secure_message_count=2)
        assert exact_leakage(r4, self.PAIR).bits <= exact_leakage(r1, self.PAIR).bits

    def test_blinded_eavesdropper_leaks_below_millibit(self):
        budget = CodeBudget(4, 0.5, 1.0)
        pair = WiretapChannelPair.from_dark_currents(0.2, 1000.0)
        r4 = build_wiretap_code(budget, 6.0, 4, seed=42, secure_message_count=2)
        assert exact_leakage(r4, pair).bits < 1e-3

    def test_leakage_bounded_by_main_channel_information(self):
        # data processing at the code level: Eve's block tells no more than Bob's
        budget = CodeBudget(4, 0.5, 1.0)
        code = build_wiretap_code(budget, 6.0, 2, seed=8, secure_message_count=2)
        eve_bits = exact_leakage(code, self.PAIR).bits
        bob_bits = code_mutual_information(code, self.PAIR.main).bits
        assert eve_bits <= bob_bits + 1e-9

    def test_window_captures_mass(self):
        code = build_wiretap_code(CodeBudget(4, 0.5, 1.0), 6.0, 1, seed=3, secure_message_count=2)
        est = exact_leakage(code, self.PAIR, tail_tol=1e-10)
        assert est.min_captured_mass >= 1 - 4 * 1e-10

    def test_guard_refuses_large_blocks(self):
        code = build_wiretap_code(CodeBudget(36, 0.3, 1.0), 6.0, 1, seed=3, secure_message_count=2)
        with pytest.raises(EnumerationInfeasibleError):
            exact_leakage(code, self.PAIR)

    def test_guard_refuses_many_codewords(self):
        code = build_wiretap_code(CodeBudget(16, 0.3, 1.0), 6.0, 8, seed=3, secure_message_count=16)
        with pytest.raises(EnumerationInfeasibleError):
            exact_leakage(code, self.PAIR)
