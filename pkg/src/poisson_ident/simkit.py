"""End-to-end secure identification over the Poisson wiretap pair.

Wires the coloring layer to the two physical-layer codes: a trial draws a
coloring number j, sends j over the transmission code and the identity's
color over the wiretap code, then the receiver decodes both blocks and
verifies the tested identity against the decoded pair.  Monte Carlo
estimators report missed-identification (type I) and false-identification
(type II) rates with Wilson intervals; the eavesdropper runs the same
decode-then-verify pipeline on her own observations.

Every trial is a pure function of (master seed, trial index), so reports are
reproducible and invariant to evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import idcode
from .channel import PoissonChannel, WiretapChannelPair, sample_with_rng
from .idcode import ColoringNumber, Identity, TagScheme
from .phycode import (
    CodeBudget,
    EnumerationInfeasibleError,
    InfeasibleCodeError,
    LeakageEstimate,
    TransmissionCodebook,
    WiretapCodebook,
    _decode_batch,
    build_transmission_code,
    build_wiretap_code,
    code_mutual_information,
)

__all__ = [
    "IdentificationSystem",
    "TrialOutcome",
    "SimulationReport",
    "EveReport",
    "ScalingRow",
    "build_system",
    "send",
    "receive_and_verify",
    "run_trial",
    "estimate_errors",
    "eve_advantage",
    "scaling_study",
    "wilson_interval",
]

_Z95 = 1.959963984540054


def wilson_interval(successes: int, trials: int, z: float = _Z95) -> tuple:
    """Wilson 95% score interval for a binomial proportion; always contains k/n."""
    if trials <= 0:
        return (0.0, 1.0)
    phat = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2.0 * trials)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / trials + z2 / (4.0 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return (lo, hi)


@dataclass(frozen=True)
class IdentificationSystem:
    """Concatenated identification code over a degraded Poisson wiretap pair.

    Coloring numbers map j1-major onto transmission messages (index j1 q2 + j2)
    and colors map identically onto wiretap secure messages, so every (j, color)
    pair is transmittable.
    """

    scheme: TagScheme
    tx_code: TransmissionCodebook
    wt_code: WiretapCodebook
    pair: WiretapChannelPair

    def __post_init__(self):
        if self.scheme.coloring_space > self.tx_code.message_count:
            raise InfeasibleCodeError(
                f"coloring-number space {self.scheme.coloring_space} exceeds "
                f"transmission messages {self.tx_code.message_count}"
            )
        if self.scheme.color_space > self.wt_code.secure_message_count:
            raise InfeasibleCodeError(
                f"color space {self.scheme.color_space} exceeds "
                f"wiretap secure messages {self.wt_code.secure_message_count}"
            )
        if self.tx_code.peak != self.wt_code.peak:
            raise ValueError("transmission and wiretap codes must share the peak amplitude")

    def j_index(self, j: ColoringNumber) -> int:
        return j.j1 * self.scheme.q2 + j.j2

    def j_from_index(self, index: int) -> ColoringNumber:
        j1, j2 = divmod(int(index), self.scheme.q2)
        return ColoringNumber(j1, j2)

    @property
    def total_length(self) -> int:
        return self.tx_code.block_length + self.wt_code.block_length


def build_system(
    budget: CodeBudget,
    pair: WiretapChannelPair,
    peak: float,
    seed: int,
    *,
    bin_size: int = 1,
    delta: float = 1.0 / 16.0,
    scheme_cap: int = 2 ** 20,
) -> IdentificationSystem:
    """Derive the coloring scheme from the budget and build matching codebooks.

    The transmission code gets exactly q1 q2 messages (one per coloring number)
    and the wiretap code exactly q2 secure messages (one per color); the bin
    size is reduced if needed so all codewords stay globally distinct.
    """
    scheme = idcode.scheme_for_budget(
        budget.n, budget.epsilon, budget.capacity_estimate, delta=delta, cap=scheme_cap
    )
    n2 = budget.wiretap_block_length
    r_max = 2 ** n2 // scheme.q2
    if r_max < 1:
        raise InfeasibleCodeError(
            f"{scheme.q2} colors cannot fit {n2} wiretap channel uses"
        )
    tx_seed, wt_seed = (
        int(s) for s in np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
    )
    tx = build_transmission_code(budget, peak, tx_seed, message_count=scheme.coloring_space)
    wt = build_wiretap_code(
        budget, peak, min(bin_size, r_max), wt_seed, secure_message_count=scheme.q2
    )
    return IdentificationSystem(scheme=scheme, tx_code=tx, wt_code=wt, pair=pair)


@dataclass(frozen=True)
class SendResult:
    """One transmission: Bob's and Eve's observations of both blocks."""

    y_obs: tuple
    z_obs: tuple
    j: ColoringNumber
    color: int


def _encode_and_transmit(system: IdentificationSystem, identity: Identity, rng: np.random.Generator):
    """Draw (j, bin member), then Bob's noise, then Eve's, from one pinned stream."""
    scheme = system.scheme
    j = ColoringNumber(int(rng.integers(0, scheme.q1)), int(rng.integers(0, scheme.q2)))
    color = idcode.tag(scheme, identity, j)
    x_tx = system.tx_code.codeword(system.j_index(j))
    r = int(rng.integers(0, system.wt_code.bin_size))
    x_wt = system.wt_code.codewords[color * system.wt_code.bin_size + r]
    y_tx = sample_with_rng(system.pair.main, x_tx, rng)
    y_wt = sample_with_rng(system.pair.main, x_wt, rng)
    z_tx = sample_with_rng(system.pair.eavesdropper, x_tx, rng)
    z_wt = sample_with_rng(system.pair.eavesdropper, x_wt, rng)
    return j, color, (y_tx, y_wt), (z_tx, z_wt)


def send(system: IdentificationSystem, identity: Identity, seed: int) -> SendResult:
    """Transmit `identity`: pick j uniformly, send (j, color) through both channels."""
    rng = np.random.Generator(np.random.PCG64(seed))
    j, color, y_obs, z_obs = _encode_and_transmit(system, identity, rng)
    return SendResult(y_obs=y_obs, z_obs=z_obs, j=j, color=color)


def receive_and_verify(
    system: IdentificationSystem, tested_identity: Identity, obs: tuple, channel: PoissonChannel
) -> bool:
    """Decode both blocks with ML, then check the tested identity's color.

    Returns True ("the identification message is the tested one") iff the
    tested identity's color at the decoded coloring number equals the decoded
    color.
    """
    y_tx, y_wt = obs
    j_hat = _decode_batch(system.tx_code.codewords, np.asarray(y_tx, dtype=np.float64)[None, :], channel)[0]
    winner = _decode_batch(system.wt_code.codewords, np.asarray(y_wt, dtype=np.float64)[None, :], channel)[0]
    color_hat = int(winner) // system.wt_code.bin_size
    return idcode.verify(system.scheme, tested_identity, system.j_from_index(int(j_hat)), color_hat)


@dataclass(frozen=True)
class TrialOutcome:
    """Decode-then-verify verdict for one tested identity on one transmission."""

    decoded_j: int
    decoded_color: int
    verdict: bool
    truth: bool


@dataclass(frozen=True)
class SimulationReport:
    """Paired type-I/type-II error estimates with Wilson 95% intervals."""

    trials: int
    type1_errors: int
    type2_errors: int
    type1_rate: float
    type2_rate: float
    type1_ci: tuple
    type2_ci: tuple
    collision_bound: float
    j_decode_errors: int
    color_decode_errors: int
    config: dict = field(repr=False, default_factory=dict)


def _trial_rng(master_seed: int, t: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((master_seed, t))))


def _draw_identity(rng: np.random.Generator, scheme: TagScheme) -> np.ndarray:
    return rng.integers(0, scheme.q1, size=scheme.k1)


def _trial_draws(system: IdentificationSystem, seed: int, t: int, *, with_eve: bool,
                 fixed_pair: Optional[tuple] = None):
    """All randomness of trial t, a pure function of (master seed, t).

    Draw order is pinned: identity, other identity, j1, j2, bin member,
    Bob's two blocks, then (when requested) Eve's two blocks.
    """
    scheme = system.scheme
    rng = _trial_rng(seed, t)
    if fixed_pair is None:
        sent = _draw_identity(rng, scheme)
        while True:
            other = _draw_identity(rng, scheme)
            if not np.array_equal(other, sent):
                break
    else:
        sent = np.asarray(fixed_pair[0].coefficients, dtype=np.int64)
        other = np.asarray(fixed_pair[1].coefficients, dtype=np.int64)
    j1 = int(rng.integers(0, scheme.q1))
    j2 = int(rng.integers(0, scheme.q2))
    r = int(rng.integers(0, system.wt_code.bin_size))
    color = idcode.tag_scalar(scheme, sent.tolist(), j1, j2)
    x_tx = system.tx_code.codewords[j1 * scheme.q2 + j2]
    x_wt = system.wt_code.codewords[color * system.wt_code.bin_size + r]
    y_tx = sample_with_rng(system.pair.main, x_tx, rng)
    y_wt = sample_with_rng(system.pair.main, x_wt, rng)
    z_tx = z_wt = None
    if with_eve:
        z_tx = sample_with_rng(system.pair.eavesdropper, x_tx, rng)
        z_wt = sample_with_rng(system.pair.eavesdropper, x_wt, rng)
    return sent, other, j1, j2, y_tx, y_wt, z_tx, z_wt


def _gather_trials(system: IdentificationSystem, trials: int, seed: int, *, with_eve: bool,
                   fixed_pair: Optional[tuple] = None):
    """Stack per-trial draws; any evaluation order yields the same stacked data."""
    scheme = system.scheme
    sent = np.empty((trials, scheme.k1), dtype=np.int64)
    other = np.empty((trials, scheme.k1), dtype=np.int64)
    j1 = np.empty(trials, dtype=np.int64)
    j2 = np.empty(trials, dtype=np.int64)
    y_tx = np.empty((trials, system.tx_code.block_length), dtype=np.float64)
    y_wt = np.empty((trials, system.wt_code.block_length), dtype=np.float64)
    z_tx = np.empty_like(y_tx) if with_eve else None
    z_wt = np.empty_like(y_wt) if with_eve else None
    for t in range(trials):
        draws = _trial_draws(system, seed, t, with_eve=with_eve, fixed_pair=fixed_pair)
        sent[t], other[t], j1[t], j2[t] = draws[0], draws[1], draws[2], draws[3]
        y_tx[t], y_wt[t] = draws[4], draws[5]
        if with_eve:
            z_tx[t], z_wt[t] = draws[6], draws[7]
    return sent, other, j1, j2, y_tx, y_wt, z_tx, z_wt


def run_trial(system: IdentificationSystem, seed: int, t: int = 0) -> tuple:
    """One paired trial: the verdict outcomes for the sent and an unrelated identity."""
    sent, other, j1, j2, y_tx, y_wt, _, _ = _trial_draws(system, seed, t, with_eve=False)
    j_hat = int(_decode_batch(system.tx_code.codewords, y_tx[None, :], system.pair.main)[0])
    winner = int(_decode_batch(system.wt_code.codewords, y_wt[None, :], system.pair.main)[0])
    color_hat = winner // system.wt_code.bin_size
    verdict_same = bool(_verdicts(system, sent[None, :], np.array([j_hat]), np.array([color_hat]))[0])
    verdict_other = bool(_verdicts(system, other[None, :], np.array([j_hat]), np.array([color_hat]))[0])
    return (
        TrialOutcome(decoded_j=j_hat, decoded_color=color_hat, verdict=verdict_same, truth=True),
        TrialOutcome(decoded_j=j_hat, decoded_color=color_hat, verdict=verdict_other, truth=False),
    )


def _verdicts(system: IdentificationSystem, coeffs: np.ndarray, j_hat: np.ndarray,
              color_hat: np.ndarray) -> np.ndarray:
    j1_hat, j2_hat = np.divmod(j_hat, system.scheme.q2)
    tags = idcode.tag_batch(system.scheme, coeffs, j1_hat, j2_hat)
    return tags == color_hat


def estimate_errors(
    system: IdentificationSystem,
    trials: int,
    seed: int,
    *,
    fixed_pair: Optional[tuple] = None,
) -> SimulationReport:
    """Paired Monte Carlo estimate of both identification error kinds.

    Each trial sends a fresh identity and checks the verdict twice on the same
    observation: against the sent identity (a "no" is a type-I error) and
    against an independently drawn different identity (a "yes" is a type-II
    error).  `fixed_pair` pins (sent, tested) instead of drawing them.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if fixed_pair is not None and fixed_pair[0] == fixed_pair[1]:
        raise ValueError("fixed_pair must name two distinct identities")
    scheme = system.scheme
    sent, other, j1, j2, y_tx, y_wt, _, _ = _gather_trials(
        system, trials, seed, with_eve=False, fixed_pair=fixed_pair
    )
    j_hat = _decode_batch(system.tx_code.codewords, y_tx, system.pair.main)
    winners = _decode_batch(system.wt_code.codewords, y_wt, system.pair.main)
    color_hat = winners // system.wt_code.bin_size
    verdict_same = _verdicts(system, sent, j_hat, color_hat)
    verdict_other = _verdicts(system, other, j_hat, color_hat)
    type1 = int((~verdict_same).sum())
    type2 = int(verdict_other.sum())
    sent_color = idcode.tag_batch(scheme, sent, j1, j2)
    j_sent = j1 * scheme.q2 + j2
    return SimulationReport(
        trials=trials,
        type1_errors=type1,
        type2_errors=type2,
        type1_rate=type1 / trials,
        type2_rate=type2 / trials,
        type1_ci=wilson_interval(type1, trials),
        type2_ci=wilson_interval(type2, trials),
        collision_bound=idcode.collision_bound(scheme),
        j_decode_errors=int((j_hat != j_sent).sum()),
        color_decode_errors=int((color_hat != sent_color).sum()),
        config=_system_config(system, trials=trials, seed=seed),
    )


@dataclass(frozen=True)
class EveReport:
    """Eavesdropper identification ability vs the legitimate receiver's."""

    trials: int
    bob_yes_count: int
    eve_yes_count: int
    bob_yes_rate: float
    eve_yes_rate: float
    bob_ci: tuple
    eve_ci: tuple
    collision_bound: float
    advantage: float
    leakage: Optional[LeakageEstimate]
    config: dict = field(repr=False, default_factory=dict)


def eve_advantage(
    system: IdentificationSystem,
    trials: int,
    seed: int,
    *,
    leakage_tail_tol: float = 1e-12,
) -> EveReport:
    """Empirical attack: Eve decode-then-verifies the sent identity on her observation.

    Reports her yes-rate on the true identity next to Bob's, the gap to the
    collision-bound baseline, and exact wiretap-block leakage when the
    enumeration guard allows it.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    sent, _, _, _, y_tx, y_wt, z_tx, z_wt = _gather_trials(system, trials, seed, with_eve=True)
    j_hat_b = _decode_batch(system.tx_code.codewords, y_tx, system.pair.main)
    color_hat_b = _decode_batch(system.wt_code.codewords, y_wt, system.pair.main) // system.wt_code.bin_size
    j_hat_e = _decode_batch(system.tx_code.codewords, z_tx, system.pair.eavesdropper)
    color_hat_e = _decode_batch(system.wt_code.codewords, z_wt, system.pair.eavesdropper) // system.wt_code.bin_size
    bob_yes = int(_verdicts(system, sent, j_hat_b, color_hat_b).sum())
    eve_yes = int(_verdicts(system, sent, j_hat_e, color_hat_e).sum())
    try:
        leakage = code_mutual_information(system.wt_code, system.pair.eavesdropper, leakage_tail_tol)
    except EnumerationInfeasibleError:
        leakage = None
    bound = idcode.collision_bound(system.scheme)
    return EveReport(
        trials=trials,
        bob_yes_count=bob_yes,
        eve_yes_count=eve_yes,
        bob_yes_rate=bob_yes / trials,
        eve_yes_rate=eve_yes / trials,
        bob_ci=wilson_interval(bob_yes, trials),
        eve_ci=wilson_interval(eve_yes, trials),
        collision_bound=bound,
        advantage=eve_yes / trials - bound,
        leakage=leakage,
        config=_system_config(system, trials=trials, seed=seed),
    )


def _system_config(system: IdentificationSystem, **extra) -> dict:
    cfg = {
        "lambda_b": system.pair.main.dark_current,
        "lambda_e": system.pair.eavesdropper.dark_current,
        "peak": system.tx_code.peak,
        "n": system.tx_code.block_length,
        "n_wiretap": system.wt_code.block_length,
        "m_prime": system.tx_code.message_count,
        "m_dprime": system.wt_code.secure_message_count,
        "bin_size": system.wt_code.bin_size,
        "q1": system.scheme.q1,
        "k1": system.scheme.k1,
        "q2": system.scheme.q2,
        "k2": system.scheme.k2,
    }
    cfg.update(extra)
    return cfg


@dataclass(frozen=True)
class ScalingRow:
    """One budget's scheme sizes and measured error rates (when buildable)."""

    n: int
    epsilon: float
    capacity_estimate: float
    bits: int
    q1: int
    k1: int
    q2: int
    k2: int
    identity_count: int
    log2_log2: float
    llog_per_bit: float
    llog_per_n: float
    m_prime: int
    m_dprime: int
    ideal_m_prime: int
    ideal_m_dprime: int
    capped: bool
    feasible: bool
    reason: str
    type1_rate: Optional[float]
    type2_rate: Optional[float]


def scaling_study(
    budgets: list,
    pair: WiretapChannelPair,
    peak: float,
    seed: int,
    *,
    trials: int = 200,
    bin_size: int = 1,
    delta: float = 1.0 / 16.0,
    scheme_cap: int = 2 ** 20,
) -> list:
    """Identity-count growth across budgets, with measured rates per feasible row.

    Infeasible budgets are flagged in their row rather than raised; the scheme
    sizes (and hence the double-exponential growth columns) are recorded for
    every row.
    """
    rows = []
    for idx, budget in enumerate(budgets):
        scheme = idcode.scheme_for_budget(
            budget.n, budget.epsilon, budget.capacity_estimate, delta=delta, cap=scheme_cap
        )
        count = idcode.identity_count(scheme)
        llog = idcode.log2_log2(scheme)
        bits = math.floor(budget.n * (budget.capacity_estimate - budget.epsilon))
        ideal_m = budget.ideal_transmission_size
        ideal_m2 = budget.ideal_wiretap_size
        capped = scheme.coloring_space < ideal_m or scheme.q2 < ideal_m2
        type1 = type2 = None
        feasible, reason = True, ""
        try:
            system = build_system(
                budget, pair, peak, int(np.random.SeedSequence((seed, idx)).generate_state(1)[0]),
                bin_size=bin_size, delta=delta, scheme_cap=scheme_cap,
            )
            report = estimate_errors(system, trials, seed)
            type1, type2 = report.type1_rate, report.type2_rate
        except InfeasibleCodeError as exc:
            feasible, reason = False, str(exc)
        rows.append(
            ScalingRow(
                n=budget.n,
                epsilon=budget.epsilon,
                capacity_estimate=budget.capacity_estimate,
                bits=bits,
                q1=scheme.q1,
                k1=scheme.k1,
                q2=scheme.q2,
                k2=scheme.k2,
                identity_count=count,
                log2_log2=llog,
                llog_per_bit=llog / bits if bits > 0 else math.nan,
                llog_per_n=llog / budget.n,
                m_prime=scheme.coloring_space,
                m_dprime=scheme.q2,
                ideal_m_prime=ideal_m,
                ideal_m_dprime=ideal_m2,
                capped=capped,
                feasible=feasible,
                reason=reason,
                type1_rate=type1,
                type2_rate=type2,
            )
        )
    return rows
