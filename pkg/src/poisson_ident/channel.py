"""Discrete-time Poisson observation channels and the degraded wiretap pair.

A channel adds a fixed dark current to the transmitted intensity and emits a
Poisson-distributed count per use.  All exact computations over the unbounded
count alphabet go through a certified truncation point (`truncation_bound`).
Sampling is pinned to a fixed algorithm so that seeded runs reproduce
bit-for-bit across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaln, xlogy

__all__ = [
    "PoissonChannel",
    "WiretapChannelPair",
    "sample_with_rng",
]

# Means below this are sampled by sequential-search inversion (one uniform per
# draw); means at or above it use Hormann's transformed-rejection sampler.
_INVERSION_MEAN_MAX = 30.0

# Score assigned per unit count at a zero-mean symbol, in place of log(0).
# Finite so that ties among impossible hypotheses stay well ordered.
IMPOSSIBLE_LOG = -1.0e30


def _as_seq(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D sequence, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class PoissonChannel:
    """Memoryless Poisson channel: count ~ Poisson(intensity + dark_current)."""

    dark_current: float

    def __post_init__(self):
        if not (self.dark_current >= 0.0 and math.isfinite(self.dark_current)):
            raise ValueError(f"dark current must be finite and >= 0, got {self.dark_current}")

    def log_pmf(self, x: float, y: int) -> float:
        """Log-probability of observing count y at input intensity x.

        Evaluated in log space so large counts do not overflow.  A zero-mean
        channel use is a point mass at 0; impossible counts get -inf.
        """
        if x < 0:
            raise ValueError(f"input intensity must be >= 0, got {x}")
        if y < 0 or y != int(y):
            raise ValueError(f"count must be a nonnegative integer, got {y}")
        mu = x + self.dark_current
        if mu == 0.0:
            return 0.0 if y == 0 else float("-inf")
        return y * math.log(mu) - mu - math.lgamma(y + 1.0)

    def pmf(self, x: float, y: int) -> float:
        """Probability of count y given intensity x: exp(-(x+lam)) (x+lam)^y / y!."""
        return math.exp(self.log_pmf(x, y))

    def pmf_vector(self, x: float, y_max: int) -> np.ndarray:
        """Probabilities of counts 0..y_max at intensity x, as one vector."""
        if x < 0:
            raise ValueError(f"input intensity must be >= 0, got {x}")
        mu = x + self.dark_current
        y = np.arange(y_max + 1, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return np.exp(xlogy(y, mu) - mu - gammaln(y + 1.0))

    def sequence_log_likelihood(self, x_seq, y_seq) -> float:
        """Log of the product law over a block: sum_t log pmf(x_t, y_t)."""
        xs = _as_seq(x_seq)
        ys = _as_seq(y_seq)
        if xs.shape != ys.shape:
            raise ValueError(f"length mismatch: {xs.shape[0]} inputs vs {ys.shape[0]} counts")
        return float(sum(self.log_pmf(float(x), int(y)) for x, y in zip(xs, ys)))

    def sample(self, x_seq, seed: int) -> np.ndarray:
        """Draw one count per input intensity, independently, Poisson(x_t + lam).

        Identical (channel, x_seq, seed) reproduces the output exactly.  The
        sampling algorithm is fixed: inversion by sequential search for means
        below 30, transformed rejection above.
        """
        rng = np.random.Generator(np.random.PCG64(seed))
        return sample_with_rng(self, x_seq, rng)

    def truncation_bound(self, x_max: float, tail_tol: float) -> int:
        """Smallest y_max whose upper tail mass at intensity x_max is < tail_tol.

        A Chernoff bound certifies an initial bracket, which is then refined
        against the exact tail (regularized incomplete gamma).
        """
        if not (0.0 < tail_tol < 1.0):
            raise ValueError(f"tail_tol must lie in (0, 1), got {tail_tol}")
        if x_max < 0:
            raise ValueError(f"x_max must be >= 0, got {x_max}")
        mu = x_max + self.dark_current
        if mu == 0.0:
            return 0
        # Certified bracket: P(Y > k) <= exp(-mu) (e mu / k)^k for k > mu.
        hi = max(int(math.ceil(mu)) + 1, 2)
        while _poisson_tail(hi, mu) >= tail_tol:
            hi *= 2
            if hi > 10 ** 9:
                raise RuntimeError("truncation bracket failed to close")
        lo = -1  # tail at -1 is the full mass, always >= tail_tol
        while hi - lo > 1:
            mid = (hi + lo) // 2
            if _poisson_tail(mid, mu) < tail_tol:
                hi = mid
            else:
                lo = mid
        return hi


def _poisson_tail(k: int, mu: float) -> float:
    """Exact P(Y > k) for Y ~ Poisson(mu); k = -1 gives 1."""
    if k < 0:
        return 1.0
    return float(gammainc(k + 1, mu))


@dataclass(frozen=True)
class WiretapChannelPair:
    """Main channel to the legitimate receiver plus a degraded eavesdropper channel.

    Requires lambda_E >= lambda_B: the eavesdropper's count is then distributed
    as the main count plus independent Poisson(lambda_E - lambda_B) noise.
    """

    main: PoissonChannel
    eavesdropper: PoissonChannel

    def __post_init__(self):
        if self.eavesdropper.dark_current < self.main.dark_current:
            raise ValueError(
                "not a degraded pair: eavesdropper dark current "
                f"{self.eavesdropper.dark_current} < main {self.main.dark_current}"
            )

    @classmethod
    def from_dark_currents(cls, lambda_b: float, lambda_e: float) -> "WiretapChannelPair":
        return cls(PoissonChannel(lambda_b), PoissonChannel(lambda_e))

    def degradation_noise(self) -> float:
        """Mean of the independent Poisson noise turning the main output into the eavesdropper's."""
        return self.eavesdropper.dark_current - self.main.dark_current


# ---------------------------------------------------------------------------
# Pinned Poisson sampler.
#
# Mean < 30: inversion by sequential search.  One uniform u per draw; the
# returned count is the smallest k with F_k >= u, where F_k follows the
# recurrence p_k = p_{k-1} * mu / k, F_k = F_{k-1} + p_k, p_0 = exp(-mu).
# Mean >= 30: Hormann's transformed-rejection sampler (PTRS), two uniforms
# per attempt.  Both paths consume the generator stream in symbol order.
# ---------------------------------------------------------------------------


def sample_with_rng(channel: PoissonChannel, x_seq, rng: np.random.Generator) -> np.ndarray:
    """Like `PoissonChannel.sample` but drawing from a caller-owned generator."""
    xs = _as_seq(x_seq)
    if xs.size and xs.min() < 0:
        raise ValueError("input intensities must be >= 0")
    means = xs + channel.dark_current
    if means.size == 0:
        return np.zeros(0, dtype=np.int64)
    if means.max() < _INVERSION_MEAN_MAX:
        return _sample_inversion_batch(means, rng)
    out = np.empty(means.size, dtype=np.int64)
    for t, mu in enumerate(means):
        if mu < _INVERSION_MEAN_MAX:
            out[t] = _inversion_scalar(float(mu), float(rng.random()))
        else:
            out[t] = _ptrs_scalar(float(mu), rng)
    return out


def _inversion_table(mu: float) -> np.ndarray:
    """Cumulative masses F_0..F_K for searchsorted inversion, K comfortably past the tail."""
    size = int(mu + 25.0 * math.sqrt(mu + 1.0) + 30.0)
    table = np.empty(size, dtype=np.float64)
    p = math.exp(-mu)
    f = p
    table[0] = f
    for k in range(1, size):
        p *= mu / k
        f += p
        table[k] = f
    return table


def _sample_inversion_batch(means: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    us = rng.random(means.size)
    out = np.empty(means.size, dtype=np.int64)
    tables = {}
    for mu in np.unique(means):
        tables[float(mu)] = _inversion_table(float(mu))
    for mu, table in tables.items():
        mask = means == mu
        idx = np.searchsorted(table, us[mask], side="left")
        if np.any(idx >= table.size):  # beyond the table: finish by the same recurrence
            sel = np.nonzero(mask)[0][idx >= table.size]
            for pos in sel:
                out[pos] = _inversion_scalar(mu, float(us[pos]))
            idx = idx[idx < table.size]
            mask = mask.copy()
            mask[sel] = False
        out[mask] = idx
    return out


def _inversion_scalar(mu: float, u: float) -> int:
    if mu == 0.0:
        return 0
    p = math.exp(-mu)
    f = p
    k = 0
    while u > f:
        k += 1
        p *= mu / k
        f += p
        if k > 10 ** 7:
            raise RuntimeError("inversion sampler failed to terminate")
    return k


def _ptrs_scalar(mu: float, rng: np.random.Generator) -> int:
    """Transformed-rejection Poisson sampler for large means (Hormann, PTRS)."""
    log_mu = math.log(mu)
    b = 0.931 + 2.53 * math.sqrt(mu)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = rng.random() - 0.5
        v = rng.random()
        us = 0.5 - abs(u)
        k = int(math.floor((2.0 * a / us + b) * u + mu + 0.43))
        if us >= 0.07 and v <= v_r:
            return k
        if k < 0 or (us < 0.013 and v > us):
            continue
        lhs = math.log(v) + math.log(inv_alpha) - math.log(a / (us * us) + b)
        if lhs <= k * log_mu - mu - math.lgamma(k + 1.0):
            return k
