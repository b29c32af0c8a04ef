"""Exact integer arithmetic for 64-bit inputs.

Primality, factorization, sums of two squares, and the splitting of
rational primes p = 1 (mod 4) into Gaussian primes x + iy.  Everything
here is deterministic: Miller-Rabin runs with a fixed base set valid for
all 64-bit integers, Pollard rho uses a fixed parameter schedule, and the
two-squares decomposition is canonicalized to x > y > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import PreconditionError

_SMALL_PRIMES = (
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61,
    67, 71, 73, 79, 83, 89, 97,
)

# Sufficient witness set for every n < 3.3 * 10^24 (Sorenson & Webster),
# so in particular for all 64-bit inputs.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


class ResidueClass(Enum):
    """Residue of a prime mod 4; drives its Gaussian-integer behaviour."""

    TWO = "two"
    ONE_MOD4 = "one_mod4"
    THREE_MOD4 = "three_mod4"


def _residue_class(p: int) -> ResidueClass:
    if p == 2:
        return ResidueClass.TWO
    return ResidueClass.ONE_MOD4 if p % 4 == 1 else ResidueClass.THREE_MOD4


@dataclass(frozen=True)
class PrimePower:
    """A factor p**alpha together with the residue class of p."""

    p: int
    alpha: int
    residue_class: ResidueClass

    def __post_init__(self) -> None:
        if self.alpha < 1:
            raise ValueError(f"exponent must be >= 1, got {self.alpha}")
        if _residue_class(self.p) is not self.residue_class:
            raise ValueError(f"residue class mismatch for p={self.p}")


@dataclass(frozen=True)
class TwoSquaresRep:
    """Solution of x^2 + y^2 = p, canonical form x >= y >= 0."""

    x: int
    y: int


@dataclass(frozen=True)
class GaussianSplitting:
    """Gaussian prime x + iy over p = x^2 + y^2, with theta = arg(x + iy)."""

    p: int
    x: int
    y: int
    theta: float


@dataclass(frozen=True)
class GaussianFactorization:
    """Factorization of n classified mod 4, with splittings for p = 1 mod 4.

    ``splittings`` holds one entry per factor with residue class 1 mod 4,
    in the same ascending-p order as ``factors``.
    """

    n: int
    factors: tuple[PrimePower, ...]
    splittings: tuple[GaussianSplitting, ...]

    @property
    def two_exponent(self) -> int:
        for f in self.factors:
            if f.p == 2:
                return f.alpha
        return 0

    def is_sum_of_two_squares(self) -> bool:
        """True iff every prime q = 3 (mod 4) divides n to an even power."""
        return all(
            f.alpha % 2 == 0
            for f in self.factors
            if f.residue_class is ResidueClass.THREE_MOD4
        )


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for all 64-bit inputs."""
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n % p == 0:
            return n == p
    d = n - 1
    s = 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _pollard_rho(n: int) -> int:
    """Brent-cycle Pollard rho; returns a nontrivial factor of composite n.

    The (x0, c) schedule is fixed, so the factor found is reproducible.
    """
    if n % 2 == 0:
        return 2
    for c in range(1, 64):
        y, m = 2 + c, 128
        g = r = q = 1
        x = ys = 0
        while g == 1:
            x = y
            for _ in range(r):
                y = (y * y + c) % n
            k = 0
            while k < r and g == 1:
                ys = y
                for _ in range(min(m, r - k)):
                    y = (y * y + c) % n
                    q = q * abs(x - y) % n
                g = math.gcd(q, n)
                k += m
            r *= 2
        if g == n:
            g = 1
            while g == 1:
                ys = (ys * ys + c) % n
                g = math.gcd(abs(x - ys), n)
        if g != n:
            return g
    raise ArithmeticError(f"pollard rho failed on {n}")  # pragma: no cover

_TRIAL_BOUND = 1000


def factorize(n: int) -> list[PrimePower]:
    """Prime factorization, ascending in p; factorize(1) == []."""
    if n < 1:
        raise PreconditionError(f"factorize requires n >= 1, got {n}")
    counts: dict[int, int] = {}
    for p in range(2, _TRIAL_BOUND):
        if p * p > n:
            break
        while n % p == 0:
            counts[p] = counts.get(p, 0) + 1
            n //= p
    stack = [n] if n > 1 else []
    while stack:
        m = stack.pop()
        if is_prime(m):
            counts[m] = counts.get(m, 0) + 1
            continue
        d = _pollard_rho(m)
        stack.append(d)
        stack.append(m // d)
    return [
        PrimePower(p, a, _residue_class(p)) for p, a in sorted(counts.items())
    ]


def _sqrt_of_minus_one(p: int) -> int:
    """Smallest-witness square root of -1 mod p, for prime p = 1 (mod 4).

    Searches ascending for a quadratic non-residue a (Euler criterion);
    a^((p-1)/4) then squares to -1.
    """
    for a in range(2, p):
        if pow(a, (p - 1) // 2, p) == p - 1:
            return pow(a, (p - 1) // 4, p)
    raise ArithmeticError(f"no quadratic non-residue below {p}")  # pragma: no cover


def two_squares_prime(p: int) -> TwoSquaresRep:
    """Write a prime p = 1 (mod 4) as x^2 + y^2 with x > y > 0.

    Hermite-Serret reduction: run the Euclidean algorithm on (p, z) where
    z^2 = -1 (mod p); the first remainder below sqrt(p) is one leg.
    """
    if p % 4 != 1 or not is_prime(p):
        raise PreconditionError(f"{p} is not a prime congruent to 1 mod 4")
    z = _sqrt_of_minus_one(p)
    a, b = p, z
    limit = math.isqrt(p)
    while b > limit:
        a, b = b, a % b
    x = b
    y = math.isqrt(p - x * x)
    if x * x + y * y != p:  # pragma: no cover - Hermite-Serret guarantees this
        raise ArithmeticError(f"two-squares reduction failed for {p}")
    if x < y:
        x, y = y, x
    return TwoSquaresRep(x, y)


def gaussian_factorize(n: int) -> GaussianFactorization:
    """Factor n and split every p = 1 (mod 4) factor into Gaussian primes.

    theta is the only float in the result; the x, y legs satisfy
    x^2 + y^2 = p exactly and are checked as integers.
    """
    factors = tuple(factorize(n))
    splittings = []
    for f in factors:
        if f.residue_class is ResidueClass.ONE_MOD4:
            rep = two_squares_prime(f.p)
            theta = math.atan2(rep.y, rep.x)
            splittings.append(GaussianSplitting(f.p, rep.x, rep.y, theta))
    return GaussianFactorization(n, factors, tuple(splittings))
