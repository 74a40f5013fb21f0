"""Identity coloring layer: two-stage polynomial coloring functions over prime fields.

An identity is a polynomial of degree < k1 over GF(q1).  Its coloring function
maps a coloring number (j1, j2) to a color in GF(q2): evaluate the identity
polynomial at j1, expand the result in base q2, and evaluate that digit
polynomial at j2.  Distinct identities collide on a uniformly drawn coloring
number with probability at most (k1-1)/q1 + (k2-1)/q2, while the identity
space q1^k1 grows doubly exponentially in the outer budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import sympy

__all__ = [
    "TagScheme",
    "Identity",
    "ColoringNumber",
    "tag",
    "tag_batch",
    "tag_scalar",
    "verify",
    "collision_bound",
    "identity_count",
    "log2_log2",
    "identity_from_index",
    "identity_index",
    "random_identity",
    "random_coloring_number",
    "scheme_for_budget",
]


@dataclass(frozen=True)
class TagScheme:
    """Parameters of the coloring family: outer/inner prime fields and degree bounds."""

    q1: int
    k1: int
    q2: int
    k2: int

    def __post_init__(self):
        for name in ("q1", "q2"):
            q = getattr(self, name)
            if not sympy.isprime(q):
                raise ValueError(f"{name} must be prime, got {q}")
        if not 1 <= self.k1 <= self.q1:
            raise ValueError(f"need 1 <= k1 <= q1, got k1={self.k1}, q1={self.q1}")
        if not 1 <= self.k2 <= self.q2:
            raise ValueError(f"need 1 <= k2 <= q2, got k2={self.k2}, q2={self.q2}")
        if self.q2 ** self.k2 < self.q1:
            raise ValueError(
                f"inner layer too small: q2^k2 = {self.q2 ** self.k2} < q1 = {self.q1}"
            )

    @property
    def coloring_space(self) -> int:
        """Number of coloring numbers, q1 * q2."""
        return self.q1 * self.q2

    @property
    def color_space(self) -> int:
        """Number of colors, q2."""
        return self.q2


@dataclass(frozen=True)
class Identity:
    """Coefficients (little-endian) of a polynomial of degree < k1 over GF(q1)."""

    coefficients: tuple

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(int(c) for c in self.coefficients))


@dataclass(frozen=True)
class ColoringNumber:
    j1: int
    j2: int


def _check_identity(scheme: TagScheme, identity: Identity):
    if len(identity.coefficients) != scheme.k1:
        raise ValueError(f"identity needs {scheme.k1} coefficients, got {len(identity.coefficients)}")
    if any(not 0 <= c < scheme.q1 for c in identity.coefficients):
        raise ValueError("identity coefficients must lie in [0, q1)")


def _check_coloring_number(scheme: TagScheme, j: ColoringNumber):
    if not 0 <= j.j1 < scheme.q1:
        raise ValueError(f"j1 must lie in [0, q1), got {j.j1}")
    if not 0 <= j.j2 < scheme.q2:
        raise ValueError(f"j2 must lie in [0, q2), got {j.j2}")


def _digits(value: int, base: int, width: int) -> list:
    out = []
    for _ in range(width):
        out.append(value % base)
        value //= base
    return out


def tag_scalar(scheme: TagScheme, coefficients, j1: int, j2: int) -> int:
    """Unchecked core of `tag` on plain integers (hot path for the simulator)."""
    outer = 0
    for c in reversed(coefficients):
        outer = (outer * j1 + c) % scheme.q1
    color = 0
    for d in reversed(_digits(outer, scheme.q2, scheme.k2)):
        color = (color * j2 + d) % scheme.q2
    return color


def tag(scheme: TagScheme, identity: Identity, j: ColoringNumber) -> int:
    """Color of `identity` under coloring number `j`.

    Stage 1: Horner-evaluate the identity polynomial at j1 in GF(q1).
    Stage 2: expand the result in base q2 (k2 digits) and Horner-evaluate the
    digit polynomial at j2 in GF(q2).
    """
    _check_identity(scheme, identity)
    _check_coloring_number(scheme, j)
    return tag_scalar(scheme, identity.coefficients, j.j1, j.j2)


def tag_batch(scheme: TagScheme, coefficients: np.ndarray, j1: np.ndarray, j2: np.ndarray) -> np.ndarray:
    """Vectorized `tag` over rows of coefficient vectors and aligned j1/j2 arrays."""
    coefficients = np.asarray(coefficients, dtype=np.int64)
    j1 = np.asarray(j1, dtype=np.int64)
    j2 = np.asarray(j2, dtype=np.int64)
    outer = np.zeros(coefficients.shape[0], dtype=np.int64)
    for idx in range(scheme.k1 - 1, -1, -1):
        outer = (outer * j1 + coefficients[:, idx]) % scheme.q1
    color = np.zeros_like(outer)
    digits = []
    rem = outer
    for _ in range(scheme.k2):
        digits.append(rem % scheme.q2)
        rem = rem // scheme.q2
    for d in reversed(digits):
        color = (color * j2 + d) % scheme.q2
    return color


def verify(scheme: TagScheme, identity: Identity, j: ColoringNumber, received_color: int) -> bool:
    """True iff the received color matches tag(identity, j): decide "it was this identity"."""
    return tag(scheme, identity, j) == int(received_color)


def collision_bound(scheme: TagScheme) -> float:
    """Upper bound on Pr_j[colors of two distinct identities coincide], j uniform."""
    return (scheme.k1 - 1) / scheme.q1 + (scheme.k2 - 1) / scheme.q2


def identity_count(scheme: TagScheme) -> int:
    """Exact number of identities, q1^k1 (arbitrary precision)."""
    return scheme.q1 ** scheme.k1


def log2_log2(scheme: TagScheme) -> float:
    """log2 log2 of the identity count: the double-exponential growth exponent."""
    return math.log2(scheme.k1 * math.log2(scheme.q1))


def identity_from_index(scheme: TagScheme, index: int) -> Identity:
    """Identity whose coefficient vector is the little-endian base-q1 expansion of index."""
    if not 0 <= index < identity_count(scheme):
        raise ValueError(f"index out of range [0, {identity_count(scheme)})")
    return Identity(tuple(_digits(index, scheme.q1, scheme.k1)))


def identity_index(scheme: TagScheme, identity: Identity) -> int:
    _check_identity(scheme, identity)
    idx = 0
    for c in reversed(identity.coefficients):
        idx = idx * scheme.q1 + c
    return idx


def random_identity(scheme: TagScheme, seed) -> Identity:
    """Uniform identity, deterministic per seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return Identity(tuple(int(c) for c in rng.integers(0, scheme.q1, size=scheme.k1)))


def random_coloring_number(scheme: TagScheme, seed) -> ColoringNumber:
    """Uniform coloring number, deterministic per seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return ColoringNumber(int(rng.integers(0, scheme.q1)), int(rng.integers(0, scheme.q2)))


def scheme_for_budget(
    n: int,
    epsilon: float,
    capacity_estimate: float,
    *,
    delta: float = 1.0 / 16.0,
    cap: int = 2 ** 20,
) -> TagScheme:
    """Pick (q1, k1, q2, k2) tracking the concatenated-code size labels for block length n.

    q1 is the smallest prime at or above min(2^floor(n(C-eps)), cap), q2 the
    smallest prime at or above min(2^ceil(sqrt(n) eps), cap); k2 is the least
    power of q2 reaching q1 and k1 = max(2, floor(delta q1)).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0 < epsilon < capacity_estimate:
        raise ValueError(f"need 0 < epsilon < capacity estimate, got {epsilon} vs {capacity_estimate}")
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    b1 = math.floor(n * (capacity_estimate - epsilon))
    b2 = math.ceil(math.sqrt(n) * epsilon)
    q1 = int(sympy.nextprime(min(2 ** max(b1, 1), cap) - 1))
    q2 = int(sympy.nextprime(min(2 ** max(b2, 1), cap) - 1))
    # Raise q2 until the inner degree bound fits the field (k2 <= q2), so the
    # scheme invariant holds even when the budget asks for a tiny color alphabet.
    while _digits_needed(q1, q2) > q2:
        q2 = int(sympy.nextprime(q2))
    k1 = min(max(2, math.floor(delta * q1)), q1)
    return TagScheme(q1=q1, k1=k1, q2=q2, k2=_digits_needed(q1, q2))


def _digits_needed(q1: int, q2: int) -> int:
    k2 = 1
    while q2 ** k2 < q1:
        k2 += 1
    return k2
