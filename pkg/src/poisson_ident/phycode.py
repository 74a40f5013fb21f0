"""Physical-layer codes: random on-off transmission code and binned wiretap code.

Codewords are amplitude sequences over {0, A}.  The transmission code carries
the coloring number over n main-channel uses; the wiretap code carries the
color over ceil(sqrt(n)) uses, with R codewords per secure message chosen by
local randomness (random binning).  Decoding is maximum likelihood with ties
broken toward the lowest index.  Leakage of the wiretap block to the
eavesdropper is computed exactly by enumerating the truncated output space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .channel import IMPOSSIBLE_LOG, PoissonChannel, WiretapChannelPair

__all__ = [
    "CodeBudget",
    "TransmissionCodebook",
    "WiretapCodebook",
    "InfeasibleCodeError",
    "EnumerationInfeasibleError",
    "LeakageEstimate",
    "build_transmission_code",
    "build_wiretap_code",
    "ml_decode",
    "wiretap_encode",
    "wiretap_decode",
    "exact_leakage",
    "code_mutual_information",
]

DEFAULT_SIZE_CAP = 2 ** 12

# Enumeration feasibility guards for exact leakage.
LEAKAGE_MAX_BLOCK = 4
LEAKAGE_MAX_CODEWORDS = 64
LEAKAGE_MAX_STATES = 2 ** 24


class InfeasibleCodeError(ValueError):
    """Requested code parameters cannot be realized (exit-code 4 territory)."""


class EnumerationInfeasibleError(InfeasibleCodeError):
    """Exact enumeration refused; use a Monte Carlo estimator instead."""


@dataclass(frozen=True)
class CodeBudget:
    """Block length n, rate slack epsilon, and the capacity estimate the sizes track."""

    n: int
    epsilon: float
    capacity_estimate: float

    def __post_init__(self):
        if self.n < 4:
            raise ValueError(f"block length must be >= 4, got {self.n}")
        if not 0 < self.epsilon < self.capacity_estimate:
            raise ValueError(
                f"need 0 < epsilon < capacity estimate, got epsilon={self.epsilon}, "
                f"C={self.capacity_estimate}"
            )

    @property
    def wiretap_block_length(self) -> int:
        return math.ceil(math.sqrt(self.n))

    @property
    def total_length(self) -> int:
        return self.n + self.wiretap_block_length

    @property
    def ideal_transmission_size(self) -> int:
        """ceil(2^{n (C - eps)}), the uncapped transmission-code size."""
        return math.ceil(2.0 ** (self.n * (self.capacity_estimate - self.epsilon)))

    @property
    def ideal_wiretap_size(self) -> int:
        """ceil(2^{ceil(sqrt(n)) eps}), the uncapped secure-message count."""
        return math.ceil(2.0 ** (self.wiretap_block_length * self.epsilon))


def _sample_distinct_rows(rng: np.random.Generator, count: int, length: int, peak: float) -> np.ndarray:
    rows = np.empty((count, length), dtype=np.float64)
    seen = set()
    filled = 0
    while filled < count:
        bits = rng.integers(0, 2, size=length)
        key = bits.tobytes()
        if key in seen:
            continue
        seen.add(key)
        rows[filled] = bits * peak
        filled += 1
    return rows


@dataclass(frozen=True)
class TransmissionCodebook:
    """Random binary {0, A} codebook with distinct codewords."""

    block_length: int
    message_count: int
    codewords: np.ndarray
    peak: float
    seed: int

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=np.float64)
        cw.setflags(write=False)
        object.__setattr__(self, "codewords", cw)

    def codeword(self, message: int) -> np.ndarray:
        if not 0 <= message < self.message_count:
            raise ValueError(f"message index out of range [0, {self.message_count})")
        return self.codewords[message]


@dataclass(frozen=True)
class WiretapCodebook:
    """Binned {0, A} codebook: bin k holds rows [k R, (k+1) R).

    Codewords are globally distinct whenever M'' R <= 2^n''; beyond that,
    distinctness is kept within each bin only (bins may then overlap), which
    is the regime where binning saturates the block.
    """

    block_length: int
    secure_message_count: int
    bin_size: int
    codewords: np.ndarray
    peak: float
    seed: int
    globally_distinct: bool

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=np.float64)
        cw.setflags(write=False)
        object.__setattr__(self, "codewords", cw)

    def bin_codewords(self, k: int) -> np.ndarray:
        if not 0 <= k < self.secure_message_count:
            raise ValueError(f"secure message out of range [0, {self.secure_message_count})")
        return self.codewords[k * self.bin_size : (k + 1) * self.bin_size]


def build_transmission_code(
    budget: CodeBudget,
    peak: float,
    seed: int,
    *,
    cap: int = DEFAULT_SIZE_CAP,
    message_count: int | None = None,
) -> TransmissionCodebook:
    """i.i.d. random {0, A} codebook of min(ideal, cap) messages, duplicates resampled.

    `message_count` overrides the budget-derived size (the system builder uses
    this to match the coloring-number space exactly).
    """
    if peak <= 0:
        raise ValueError(f"peak amplitude must be > 0, got {peak}")
    m = message_count if message_count is not None else min(budget.ideal_transmission_size, cap)
    if m < 2:
        raise InfeasibleCodeError(f"transmission code needs at least 2 messages, got {m}")
    if m > 2 ** budget.n:
        raise InfeasibleCodeError(
            f"cannot place {m} distinct binary codewords in {budget.n} channel uses"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    rows = _sample_distinct_rows(rng, m, budget.n, peak)
    return TransmissionCodebook(
        block_length=budget.n, message_count=m, codewords=rows, peak=peak, seed=seed
    )


def build_wiretap_code(
    budget: CodeBudget,
    peak: float,
    bin_size: int,
    seed: int,
    *,
    cap: int = DEFAULT_SIZE_CAP,
    secure_message_count: int | None = None,
) -> WiretapCodebook:
    """Random binning over ceil(sqrt(n)) uses: M'' bins of R codewords each."""
    if peak <= 0:
        raise ValueError(f"peak amplitude must be > 0, got {peak}")
    if bin_size < 1:
        raise ValueError(f"bin size must be >= 1, got {bin_size}")
    n2 = budget.wiretap_block_length
    m2 = secure_message_count if secure_message_count is not None else min(budget.ideal_wiretap_size, cap)
    if m2 < 1:
        raise InfeasibleCodeError(f"wiretap code needs at least 1 secure message, got {m2}")
    if bin_size > 2 ** n2:
        raise InfeasibleCodeError(
            f"bin of {bin_size} distinct codewords cannot fit {n2} channel uses"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    globally_distinct = m2 * bin_size <= 2 ** n2
    if globally_distinct:
        rows = _sample_distinct_rows(rng, m2 * bin_size, n2, peak)
    else:
        rows = np.vstack([_sample_distinct_rows(rng, bin_size, n2, peak) for _ in range(m2)])
    return WiretapCodebook(
        block_length=n2,
        secure_message_count=m2,
        bin_size=bin_size,
        codewords=rows,
        peak=peak,
        seed=seed,
        globally_distinct=globally_distinct,
    )


# ---------------------------------------------------------------------------
# Maximum-likelihood decoding.
# ---------------------------------------------------------------------------


def _decode_scores(codewords: np.ndarray, observations: np.ndarray, channel: PoissonChannel) -> np.ndarray:
    """Per-(observation, codeword) ML scores, equal-ordered with sequence log-likelihood.

    Exploits the on-off alphabet: with S2 = counts falling on a codeword's
    active positions, the score is affine in exact integer-valued sums, so the
    result is bitwise deterministic regardless of BLAS blocking.
    """
    lam = channel.dark_current
    active = (codewords > 0).astype(np.float64)
    y = np.asarray(observations, dtype=np.float64)
    if y.ndim == 1:
        y = y[None, :]
    peaks = codewords.max(axis=1)
    peak = float(peaks.max(initial=0.0))
    c_hi = math.log(peak + lam) if peak + lam > 0 else IMPOSSIBLE_LOG
    c_lo = math.log(lam) if lam > 0 else IMPOSSIBLE_LOG
    s1 = y.sum(axis=1)
    s2 = y @ active.T
    mu_sum = lam * codewords.shape[1] + active.sum(axis=1) * peak
    return c_lo * (s1[:, None] - s2) + c_hi * s2 - mu_sum[None, :]


def _decode_batch(codewords: np.ndarray, observations: np.ndarray, channel: PoissonChannel) -> np.ndarray:
    scores = _decode_scores(codewords, observations, channel)
    best = np.argmax(scores, axis=1)
    # Every codeword impossible: all scores tie at -inf in likelihood terms,
    # so the lowest-index tie-break applies.
    best[scores[np.arange(best.size), best] < IMPOSSIBLE_LOG * 1e-2] = 0
    return best


def ml_decode(codebook: TransmissionCodebook, y_seq, channel: PoissonChannel) -> int:
    """Message index maximizing the sequence log-likelihood; ties go to the lowest index."""
    y = np.asarray(y_seq, dtype=np.float64)
    if y.shape != (codebook.block_length,):
        raise ValueError(f"observation must have length {codebook.block_length}, got {y.shape}")
    return int(_decode_batch(codebook.codewords, y[None, :], channel)[0])


def wiretap_encode(codebook: WiretapCodebook, k: int, seed: int) -> np.ndarray:
    """Uniformly pick one of the R codewords in bin k; deterministic per seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return wiretap_encode_with_rng(codebook, k, rng)


def wiretap_encode_with_rng(codebook: WiretapCodebook, k: int, rng: np.random.Generator) -> np.ndarray:
    if not 0 <= k < codebook.secure_message_count:
        raise ValueError(f"secure message out of range [0, {codebook.secure_message_count})")
    r = int(rng.integers(0, codebook.bin_size))
    return codebook.codewords[k * codebook.bin_size + r]


def wiretap_decode(codebook: WiretapCodebook, y_seq, channel: PoissonChannel) -> int:
    """ML over all M''R codewords, projected to the winning codeword's bin."""
    y = np.asarray(y_seq, dtype=np.float64)
    if y.shape != (codebook.block_length,):
        raise ValueError(f"observation must have length {codebook.block_length}, got {y.shape}")
    winner = int(_decode_batch(codebook.codewords, y[None, :], channel)[0])
    return winner // codebook.bin_size


# ---------------------------------------------------------------------------
# Exact leakage by output enumeration.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LeakageEstimate:
    """Exact mutual information between the secure message and one observed block."""

    bits: float
    tail_tol: float
    support_lo: int
    support_hi: int
    states: int
    min_captured_mass: float

    def __float__(self) -> float:
        return self.bits


def _support_window(channel: PoissonChannel, peak: float, tail_tol: float) -> tuple:
    """Per-symbol count window covering every amplitude in {0, peak} up to tail_tol."""
    hi = channel.truncation_bound(peak, tail_tol / 2.0)
    mu_min = channel.dark_current
    lo = 0
    if mu_min > 0:
        from scipy.special import gammaincc

        lo_hi = int(mu_min)
        lo_lo = 0
        # Largest lo with P(Y < lo | mu_min) <= tail_tol / 2 (cdf(lo-1) = gammaincc(lo, mu)).
        while lo_lo < lo_hi:
            mid = (lo_lo + lo_hi + 1) // 2
            if float(gammaincc(mid, mu_min)) <= tail_tol / 2.0:
                lo_lo = mid
            else:
                lo_hi = mid - 1
        lo = lo_lo
    return lo, hi


def code_mutual_information(
    codebook: WiretapCodebook, channel: PoissonChannel, tail_tol: float = 1e-12
) -> LeakageEstimate:
    """Exact I(K; observed block) in bits for a uniform secure message K.

    Enumerates the truncated product output space; refuses when the block
    length, codeword count, or state count exceeds the enumeration guards.
    """
    n2 = codebook.block_length
    total = codebook.secure_message_count * codebook.bin_size
    if n2 > LEAKAGE_MAX_BLOCK or total > LEAKAGE_MAX_CODEWORDS:
        raise EnumerationInfeasibleError(
            f"exact enumeration limited to block length <= {LEAKAGE_MAX_BLOCK} and "
            f"<= {LEAKAGE_MAX_CODEWORDS} codewords (got n''={n2}, M''R={total}); "
            "use a Monte Carlo estimator for larger codes"
        )
    lo, hi = _support_window(channel, codebook.peak, tail_tol)
    width = hi - lo + 1
    states = width ** n2
    if states > LEAKAGE_MAX_STATES:
        raise EnumerationInfeasibleError(
            f"truncated output space has {states} states (> {LEAKAGE_MAX_STATES})"
        )
    counts = np.arange(lo, hi + 1, dtype=np.float64)
    rows = {}
    for a in np.unique(codebook.codewords):
        rows[float(a)] = channel.pmf_vector(float(a), hi)[lo:]

    def block_pmf(codeword: np.ndarray) -> np.ndarray:
        p = rows[float(codeword[0])]
        for sym in codeword[1:]:
            p = np.multiply.outer(p, rows[float(sym)]).ravel()
        return p

    m2 = codebook.secure_message_count
    mix = np.zeros(states)
    cond_entropy = 0.0
    min_mass = 1.0
    for k in range(m2):
        pk = np.zeros(states)
        for cw in codebook.bin_codewords(k):
            pk += block_pmf(cw)
        pk /= codebook.bin_size
        min_mass = min(min_mass, float(pk.sum()))
        cond_entropy += -float(xlogy(pk, pk).sum()) / m2
        mix += pk / m2
    mix_entropy = -float(xlogy(mix, mix).sum())
    bits = max((mix_entropy - cond_entropy) / math.log(2.0), 0.0)
    return LeakageEstimate(
        bits=bits,
        tail_tol=tail_tol,
        support_lo=lo,
        support_hi=hi,
        states=states,
        min_captured_mass=min_mass,
    )


def exact_leakage(
    codebook: WiretapCodebook, pair: WiretapChannelPair, tail_tol: float = 1e-12
) -> LeakageEstimate:
    """Exact leakage I(K; Z-block) of the wiretap code to the eavesdropper."""
    return code_mutual_information(codebook, pair.eavesdropper, tail_tol)
