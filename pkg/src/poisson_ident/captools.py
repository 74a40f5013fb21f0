"""Mutual information, channel capacity, and secrecy capacity on amplitude grids.

Capacity is computed by Blahut-Arimoto with the standard per-iteration
upper/lower bounds as a stopping certificate.  Secrecy capacity maximizes
I(X;Y) - I(X;Z) (concave for a degraded pair) by projected gradient ascent
with backtracking, certified by the Frank-Wolfe gap.  All reported values are
in bits.  An optional average-intensity cap enters both optimizers as an
extra linear constraint.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .channel import PoissonChannel, WiretapChannelPair

__all__ = [
    "AmplitudeGrid",
    "InputDistribution",
    "CapacityResult",
    "IdCapacityResult",
    "ConvergenceError",
    "output_distribution",
    "mutual_information",
    "capacity",
    "secrecy_capacity",
    "id_capacity",
]

log = logging.getLogger(__name__)

_LN2 = math.log(2.0)
DEFAULT_TAIL_TOL = 1e-12
MASS_TOL = 1e-12


class ConvergenceError(RuntimeError):
    """Raised when an optimizer exhausts max_iter; carries the last bounds (bits)."""

    def __init__(self, message: str, lower: float, upper: float, iterations: int):
        super().__init__(f"{message} (lower={lower:.12g}, upper={upper:.12g} bits after {iterations} iterations)")
        self.lower = lower
        self.upper = upper
        self.iterations = iterations


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AmplitudeGrid:
    """Finite input-amplitude alphabet: sorted points in [0, peak], containing both ends."""

    points: np.ndarray

    def __post_init__(self):
        pts = _frozen_array(np.atleast_1d(np.asarray(self.points, dtype=np.float64)))
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size == 0:
            raise ValueError("grid needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        if pts[0] != 0.0:
            raise ValueError("grid must contain 0")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")

    @classmethod
    def uniform(cls, peak: float, count: int = 65) -> "AmplitudeGrid":
        if peak <= 0:
            raise ValueError(f"peak must be > 0, got {peak}")
        if count < 2:
            raise ValueError(f"need at least 2 points, got {count}")
        return cls(np.linspace(0.0, peak, count))

    @property
    def peak(self) -> float:
        return float(self.points[-1])

    def __len__(self) -> int:
        return self.points.size


@dataclass(frozen=True)
class InputDistribution:
    """Probability mass over the points of an amplitude grid."""

    grid: AmplitudeGrid
    mass: np.ndarray

    def __post_init__(self):
        m = _frozen_array(np.asarray(self.mass, dtype=np.float64))
        object.__setattr__(self, "mass", m)
        if m.shape != self.grid.points.shape:
            raise ValueError("mass vector must align with the grid points")
        if np.any(m < 0):
            raise ValueError("masses must be >= 0")
        if abs(float(m.sum()) - 1.0) > MASS_TOL:
            raise ValueError(f"masses must sum to 1 within {MASS_TOL}, got {m.sum()!r}")

    @classmethod
    def uniform(cls, grid: AmplitudeGrid) -> "InputDistribution":
        n = len(grid)
        return cls(grid, np.full(n, 1.0 / n))

    @classmethod
    def point_mass(cls, grid: AmplitudeGrid, index: int) -> "InputDistribution":
        m = np.zeros(len(grid))
        m[index] = 1.0
        return cls(grid, m)

    def average_intensity(self) -> float:
        return float(self.mass @ self.grid.points)


@dataclass(frozen=True)
class CapacityResult:
    """Optimization outcome: value in bits, the optimizing input, and a gap certificate."""

    value: float
    optimizer: InputDistribution
    iterations: int
    duality_gap: float
    lower_bounds: tuple = field(repr=False, default=())


@dataclass(frozen=True)
class IdCapacityResult:
    """Secure-identification dichotomy: full main-channel capacity iff C_s clears the threshold.

    Proven for the Gaussian wiretap pair; conjectural for the Poisson pair, and
    flagged as such wherever reported.
    """

    value: float
    secure: bool
    threshold: float
    secrecy: CapacityResult
    transmission: Optional[CapacityResult]
    conjectured = True


def transition_matrix(grid: AmplitudeGrid, channel: PoissonChannel, y_max: int) -> np.ndarray:
    """Row i = pmf of counts 0..y_max at grid amplitude i."""
    return np.vstack([channel.pmf_vector(float(x), y_max) for x in grid.points])


def output_distribution(px: InputDistribution, channel: PoissonChannel, y_max: int) -> np.ndarray:
    """Marginal count distribution q(y) = sum_x px(x) pmf(y|x) on 0..y_max."""
    return px.mass @ transition_matrix(px.grid, channel, y_max)


def _row_divergences(w: np.ndarray, q: np.ndarray) -> np.ndarray:
    """KL(W_i || q) per row, in nats; zero pmf entries contribute nothing.

    Entries where q underflowed to 0 are dropped too: for any iterate with
    mass on a positive-mean amplitude, q >= p_i w_iy in exact arithmetic, so
    such entries sit at the subnormal boundary and carry ~1e-320 mass.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        logw = np.log(w)
        logq = np.log(q)
        terms = np.where((w > 0) & (q > 0)[None, :], w * (logw - logq[None, :]), 0.0)
    return terms.sum(axis=1)


def mutual_information(
    px: InputDistribution, channel: PoissonChannel, tail_tol: float = DEFAULT_TAIL_TOL
) -> float:
    """I(X;Y) in bits for input px over the channel, truncated at a certified y_max."""
    y_max = channel.truncation_bound(px.grid.peak, tail_tol)
    w = transition_matrix(px.grid, channel, y_max)
    q = px.mass @ w
    val = float(px.mass @ _row_divergences(w, q)) / _LN2
    return max(val, 0.0)


def capacity(
    grid: AmplitudeGrid,
    channel: PoissonChannel,
    tol: float = 1e-9,
    max_iter: int = 50_000,
    tail_tol: float = DEFAULT_TAIL_TOL,
    avg_power: Optional[float] = None,
) -> CapacityResult:
    """max_{P_X on grid} I(X;Y) by Blahut-Arimoto, stopped when the bound gap < tol bits.

    The per-iteration lower bound (achieved mutual information) is recorded and
    nondecreasing; the upper bound max_i KL(W_i || q) certifies the gap.
    """
    y_max = channel.truncation_bound(grid.peak, tail_tol)
    w = transition_matrix(grid, channel, y_max)
    if avg_power is not None:
        return _capacity_power_constrained(grid, w, tol, max_iter, avg_power)

    m = len(grid)
    logp = np.full(m, -math.log(m))
    lower_bounds = []
    for it in range(1, max_iter + 1):
        p = np.exp(logp)
        q = p @ w
        d = _row_divergences(w, q)
        lower = float(p @ d)
        upper = float(d.max())
        lower_bounds.append(lower / _LN2)
        if upper - lower < tol * _LN2:
            log.debug("capacity converged in %d iterations (gap %.3g bits)", it, (upper - lower) / _LN2)
            return CapacityResult(
                value=max(lower / _LN2, 0.0),
                optimizer=InputDistribution(grid, _renormalized(p)),
                iterations=it,
                duality_gap=max((upper - lower) / _LN2, 0.0),
                lower_bounds=tuple(lower_bounds),
            )
        logp = logp + d
        logp -= logsumexp(logp)
    raise ConvergenceError(
        "Blahut-Arimoto did not reach the requested gap",
        lower=lower_bounds[-1],
        upper=upper / _LN2,
        iterations=max_iter,
    )


def _renormalized(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def _capacity_power_constrained(
    grid: AmplitudeGrid, w: np.ndarray, tol: float, max_iter: int, avg_power: float
) -> CapacityResult:
    """Blahut's constrained iteration with an outer bisection on the intensity multiplier."""
    if avg_power <= 0:
        raise ValueError(f"avg_power must be > 0, got {avg_power}")
    x = grid.points
    m = len(grid)

    def run_ba(s: float, logp: np.ndarray, iters: int):
        for _ in range(iters):
            p = np.exp(logp)
            q = p @ w
            d = _row_divergences(w, q)
            logp = logp + d - s * x
            logp -= logsumexp(logp)
        p = np.exp(logp)
        q = p @ w
        return logp, p, q, _row_divergences(w, q)

    def certified(p, q, d, s):
        # Feasible lower bound: mix toward amplitude 0 if the power cap is exceeded.
        power = float(p @ x)
        if power > avg_power:
            theta = 1.0 - avg_power / power
            p_feas = (1.0 - theta) * p
            p_feas[0] += theta
        else:
            p_feas = p
        q_feas = p_feas @ w
        lower = float(p_feas @ _row_divergences(w, q_feas))
        upper = float(np.max(d - s * x)) + s * avg_power
        return p_feas, lower, upper

    logp = np.full(m, -math.log(m))
    s_lo, s_hi = 0.0, 1.0
    iterations = 0
    chunk = 50
    lower_bounds = []
    lower = upper = 0.0
    while iterations < max_iter:
        s = 0.5 * (s_lo + s_hi) if s_lo > 0 or _power_at(logp, x) > avg_power else 0.0
        logp, p, q, d = run_ba(s, logp, chunk)
        iterations += chunk
        p_feas, lower, upper = certified(p, q, d, s)
        lower_bounds.append(lower / _LN2)
        if upper - lower < tol * _LN2:
            return CapacityResult(
                value=max(lower / _LN2, 0.0),
                optimizer=InputDistribution(grid, _renormalized(p_feas)),
                iterations=iterations,
                duality_gap=max((upper - lower) / _LN2, 0.0),
                lower_bounds=tuple(lower_bounds),
            )
        power = float(p @ x)
        if power > avg_power:
            s_lo = s
            if s == s_hi or s_hi - s_lo < 1e-18:
                s_hi *= 2.0
        else:
            s_hi = s
    raise ConvergenceError(
        "constrained Blahut-Arimoto did not reach the requested gap",
        lower=lower / _LN2,
        upper=upper / _LN2,
        iterations=iterations,
    )


def _power_at(logp: np.ndarray, x: np.ndarray) -> float:
    return float(np.exp(logp) @ x)


# ---------------------------------------------------------------------------
# Secrecy capacity: projected gradient ascent over the simplex.
# ---------------------------------------------------------------------------


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u + (1.0 - css) / np.arange(1, v.size + 1) > 0)[0][-1]
    lam = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(v + lam, 0.0)


def _project_feasible(v: np.ndarray, x: np.ndarray, avg_power: Optional[float]) -> np.ndarray:
    p = _project_simplex(v)
    if avg_power is None or float(p @ x) <= avg_power + 1e-15:
        return p
    # Bisection on the intensity multiplier; x[0] = 0 guarantees feasibility in the limit.
    lo, hi = 0.0, 1.0
    while float(_project_simplex(v - hi * x) @ x) > avg_power:
        hi *= 2.0
        if hi > 1e18:
            raise RuntimeError("power projection failed to bracket")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(_project_simplex(v - mid * x) @ x) > avg_power:
            lo = mid
        else:
            hi = mid
    return _project_simplex(v - hi * x)


def _fw_vertex(g: np.ndarray, x: np.ndarray, avg_power: Optional[float]) -> np.ndarray:
    """Maximizer of <g, s> over the (optionally intensity-capped) simplex."""
    s = np.zeros_like(g)
    if avg_power is None:
        s[int(np.argmax(g))] = 1.0
        return s
    ok = x <= avg_power
    best_val = -np.inf
    best = None
    if np.any(ok):
        i = int(np.argmax(np.where(ok, g, -np.inf)))
        best_val = g[i]
        best = (i, i, 0.0)
    low = np.nonzero(x < avg_power)[0]
    high = np.nonzero(x > avg_power)[0]
    if low.size and high.size:
        theta = (avg_power - x[low][:, None]) / (x[high][None, :] - x[low][:, None])
        vals = (1.0 - theta) * g[low][:, None] + theta * g[high][None, :]
        k = np.unravel_index(int(np.argmax(vals)), vals.shape)
        if vals[k] > best_val:
            best_val = vals[k]
            best = (int(low[k[0]]), int(high[k[1]]), float(theta[k]))
    if best is None:
        raise ValueError("no feasible point: smallest grid amplitude exceeds avg_power")
    i, j, theta = best
    s[i] += 1.0 - theta
    s[j] += theta
    return s


def secrecy_capacity(
    grid: AmplitudeGrid,
    pair: WiretapChannelPair,
    tol: float = 1e-9,
    max_iter: int = 20_000,
    tail_tol: float = DEFAULT_TAIL_TOL,
    avg_power: Optional[float] = None,
) -> CapacityResult:
    """max_{P_X} I(X;Y) - I(X;Z) in bits over the grid simplex.

    Projected gradient ascent with Armijo backtracking; terminates when the
    Frank-Wolfe gap (a valid optimality certificate for this concave
    objective) drops below tol bits.
    """
    x = grid.points
    w = transition_matrix(grid, pair.main, pair.main.truncation_bound(grid.peak, tail_tol))
    v = transition_matrix(grid, pair.eavesdropper, pair.eavesdropper.truncation_bound(grid.peak, tail_tol))

    def objective(p: np.ndarray):
        dw = _row_divergences(w, p @ w)
        dv = _row_divergences(v, p @ v)
        g = dw - dv
        return float(p @ g), g

    p = np.full(len(grid), 1.0 / len(grid))
    p = _project_feasible(p, x, avg_power)
    fval, g = objective(p)
    eta = 1.0
    lower_bounds = []
    gap = math.inf
    for it in range(1, max_iter + 1):
        s = _fw_vertex(g, x, avg_power)
        gap = float(g @ (s - p))
        lower_bounds.append(fval / _LN2)
        if gap < tol * _LN2:
            log.debug("secrecy converged in %d iterations (gap %.3g bits)", it, gap / _LN2)
            return CapacityResult(
                value=max(fval / _LN2, 0.0),
                optimizer=InputDistribution(grid, _renormalized(p)),
                iterations=it,
                duality_gap=max(gap / _LN2, 0.0),
                lower_bounds=tuple(lower_bounds),
            )
        accepted = False
        for _ in range(60):
            cand = _project_feasible(p + eta * g, x, avg_power)
            step = cand - p
            inner = float(g @ step)
            if inner <= 0.0:
                break
            fc, gc = objective(cand)
            if fc >= fval + 1e-4 * inner:
                p, fval, g = cand, fc, gc
                eta = min(eta * 2.0, 1e12)
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            # Frank-Wolfe fallback: golden-section line search toward the vertex.
            p = _line_search_toward(p, s, objective)
            fval, g = objective(p)
    raise ConvergenceError(
        "projected gradient did not reach the requested Frank-Wolfe gap",
        lower=fval / _LN2,
        upper=(fval + gap) / _LN2,
        iterations=max_iter,
    )


def _line_search_toward(p: np.ndarray, s: np.ndarray, objective) -> np.ndarray:
    direction = s - p
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, 1.0
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc = objective(p + c * direction)[0]
    fd = objective(p + d * direction)[0]
    for _ in range(50):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = objective(p + c * direction)[0]
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = objective(p + d * direction)[0]
    gamma = 0.5 * (a + b)
    return _renormalized(np.maximum(p + gamma * direction, 0.0))


def id_capacity(
    grid: AmplitudeGrid,
    pair: WiretapChannelPair,
    tol: float = 1e-6,
    *,
    optimizer_tol: float = 1e-9,
    max_iter: int = 50_000,
    tail_tol: float = DEFAULT_TAIL_TOL,
    avg_power: Optional[float] = None,
) -> IdCapacityResult:
    """Secure-identification capacity dichotomy on the grid.

    Returns the main-channel capacity (and secure=True) when the computed
    secrecy capacity exceeds the positivity threshold `tol` in bits, else
    (0, False).  The threshold is carried in the result so borderline calls
    stay auditable.
    """
    sec = secrecy_capacity(grid, pair, optimizer_tol, max_iter, tail_tol, avg_power)
    if sec.value > tol:
        cap = capacity(grid, pair.main, optimizer_tol, max_iter, tail_tol, avg_power)
        return IdCapacityResult(value=cap.value, secure=True, threshold=tol, secrecy=sec, transmission=cap)
    return IdCapacityResult(value=0.0, secure=False, threshold=tol, secrecy=sec, transmission=None)
