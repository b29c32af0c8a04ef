"""Lattice points on circles and their angular statistics.

The central objects are the set of integer points on x^2 + y^2 = n, the
representation count r2(n), and the exponential sums

    S(n, k) = sum over points u of exp(i k theta_u).

Points are recovered exactly by Gaussian-integer multiplication from the
factorization of n; angles only ever enter in floating point.  |S(n,k)|/4
is multiplicative in n and vanishes unless 4 | k, which makes the closed
form cheap enough to average over millions of circles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import product as _iproduct
from typing import IO

import numpy as np

from .errors import PreconditionError
from .numtheory import (
    GaussianFactorization,
    ResidueClass,
    factorize,
    gaussian_factorize,
)

QUARTER_TURN = math.pi / 2


def r2(n: int) -> int:
    """Number of integer solutions of x^2 + y^2 = n.

    Zero when some prime q = 3 (mod 4) divides n to an odd power,
    otherwise 4 * prod(alpha_p + 1) over prime factors p = 1 (mod 4).
    """
    if n < 1:
        raise PreconditionError(f"r2 requires n >= 1, got {n}")
    count = 4
    for f in factorize(n):
        if f.residue_class is ResidueClass.THREE_MOD4:
            if f.alpha % 2 == 1:
                return 0
        elif f.residue_class is ResidueClass.ONE_MOD4:
            count *= f.alpha + 1
    return count


@dataclass(frozen=True)
class CirclePointSet:
    """All integer points on the circle of squared radius n.

    Points are sorted by angle in [-pi, pi); the set is closed under the
    eight symmetries (x, y) -> (+-x, +-y), (+-y, +-x).
    """

    n: int
    xs: np.ndarray
    ys: np.ndarray
    angles: np.ndarray

    @property
    def count(self) -> int:
        return len(self.xs)

    @property
    def points(self) -> list[tuple[int, int]]:
        return list(zip(self.xs.tolist(), self.ys.tolist()))


def _complex_int_pow(z: tuple[int, int], e: int) -> tuple[int, int]:
    a, b = 1, 0
    x, y = z
    for _ in range(e):
        a, b = a * x - b * y, a * y + b * x
    return a, b


def circle_points_from(gf: GaussianFactorization) -> CirclePointSet:
    """Enumerate the circle of a pre-computed factorization.

    Combines one unit rotation k*pi/2, the fixed (1+i)^s factor from the
    power of two, q^(alpha/2) for inert primes, and every exponent split
    j vs alpha-j of each Gaussian prime pair.  Coordinates come out of
    exact integer multiplication; nothing is rounded.
    """
    n = gf.n
    if not gf.is_sum_of_two_squares():
        empty = np.array([], dtype=np.int64)
        return CirclePointSet(n, empty, empty, np.array([], dtype=np.float64))

    base = _complex_int_pow((1, 1), gf.two_exponent)
    for f in gf.factors:
        if f.residue_class is ResidueClass.THREE_MOD4:
            q_half = f.p ** (f.alpha // 2)
            base = (base[0] * q_half, base[1] * q_half)

    # Per split prime, the alpha+1 products pi^j * conj(pi)^(alpha-j).
    choice_lists: list[list[tuple[int, int]]] = []
    for s in gf.splittings:
        alpha = next(f.alpha for f in gf.factors if f.p == s.p)
        pi_pows = [_complex_int_pow((s.x, s.y), j) for j in range(alpha + 1)]
        conj_pows = [_complex_int_pow((s.x, -s.y), j) for j in range(alpha + 1)]
        choices = []
        for j in range(alpha + 1):
            a, b = pi_pows[j]
            c, d = conj_pows[alpha - j]
            choices.append((a * c - b * d, a * d + b * c))
        choice_lists.append(choices)

    xs: list[int] = []
    ys: list[int] = []
    for combo in _iproduct(*choice_lists):
        zx, zy = base
        for cx, cy in combo:
            zx, zy = zx * cx - zy * cy, zx * cy + zy * cx
        # The four unit rotations z, iz, -z, -iz.
        xs.extend((zx, -zy, -zx, zy))
        ys.extend((zy, zx, -zy, -zx))

    xa = np.asarray(xs, dtype=np.int64)
    ya = np.asarray(ys, dtype=np.int64)
    angles = np.arctan2(ya, xa)
    order = np.argsort(angles, kind="stable")
    return CirclePointSet(n, xa[order], ya[order], angles[order])


def circle_points(n: int) -> CirclePointSet:
    """All integer points on x^2 + y^2 = n, sorted by angle."""
    if n < 1:
        raise PreconditionError(f"circle_points requires n >= 1, got {n}")
    return circle_points_from(gaussian_factorize(n))


@dataclass(frozen=True)
class ExpSumValue:
    """S(n, k) = sum of e^{ik theta_u} over the circle of squared radius n."""

    n: int
    k: int
    value: complex


def exp_sum_direct(n: int, k: int) -> ExpSumValue:
    """S(n, k) by direct summation over enumerated points."""
    pts = circle_points(n)
    if pts.count == 0:
        return ExpSumValue(n, k, 0j)
    value = complex(np.exp(1j * k * pts.angles).sum())
    return ExpSumValue(n, k, value)


def _split_factor_magnitude(x: float, alpha: int) -> float:
    """|sum_{j=0}^{alpha} e^{i (alpha - 2j) x}| = |sin((alpha+1)x) / sin(x)|."""
    s = math.sin(x)
    if abs(s) < 1e-12:
        return float(alpha + 1)
    return abs(math.sin((alpha + 1) * x) / s)


def exp_sum_closed(n: int, k: int) -> float:
    """|S(n, k)| from the multiplicative closed form.

    Zero when 4 does not divide k or when the circle is empty; otherwise
    4 * prod over p = 1 (mod 4) of |sum_j e^{ik(alpha_p - 2j) theta_p}|.
    Powers of two and even powers of inert primes only rotate the points,
    so they contribute factor 1.
    """
    if k % 4 != 0:
        return 0.0
    gf = gaussian_factorize(n)
    if not gf.is_sum_of_two_squares():
        return 0.0
    if k == 0:
        mag = 4.0
        for s in gf.splittings:
            alpha = next(f.alpha for f in gf.factors if f.p == s.p)
            mag *= alpha + 1
        return mag
    mag = 4.0
    for s in gf.splittings:
        alpha = next(f.alpha for f in gf.factors if f.p == s.p)
        mag *= _split_factor_magnitude(k * s.theta, alpha)
    return mag


# ---------------------------------------------------------------------------
# Sieve-backed machinery for averages over 1 <= m <= X.
# ---------------------------------------------------------------------------

def smallest_prime_factor_sieve(limit: int) -> np.ndarray:
    """spf[m] = smallest prime factor of m, for 0 <= m <= limit."""
    spf = np.zeros(limit + 1, dtype=np.int64)
    spf[1] = 1
    for i in range(2, math.isqrt(limit) + 1):
        if spf[i] == 0:
            spf[i * i :: i][spf[i * i :: i] == 0] = i
    primes_mask = spf == 0
    primes_mask[:2] = False
    spf[primes_mask] = np.nonzero(primes_mask)[0]
    return spf


_theta_cache: dict[str, object] = {"limit": 0, "ps": None, "thetas": None}


def prime_angles(limit: int) -> tuple[np.ndarray, np.ndarray]:
    """Primes p <= limit with p = 1 (mod 4) and their angles theta_p.

    Cached and grown monotonically; Cornacchia per prime is cheap enough
    that the first call up to 10^6 takes about a second.
    """
    from .numtheory import two_squares_prime

    if _theta_cache["limit"] < limit:
        spf = smallest_prime_factor_sieve(limit)
        idx = np.arange(limit + 1)
        ps = idx[(spf == idx) & (idx % 4 == 1) & (idx > 1)]
        thetas = np.empty(len(ps), dtype=np.float64)
        for i, p in enumerate(ps.tolist()):
            rep = two_squares_prime(p)
            thetas[i] = math.atan2(rep.y, rep.x)
        _theta_cache.update(limit=limit, ps=ps, thetas=thetas)
    ps = _theta_cache["ps"]
    keep = ps <= limit
    return ps[keep], _theta_cache["thetas"][keep]


@dataclass(frozen=True)
class AngleStatistics:
    """Mean of |S(m, k)| over 1 <= m <= X, with per-decade sub-means."""

    X: int
    k: int
    mean_abs_S: float
    decades: tuple[tuple[int, float], ...]
    vanishing_k: bool = False
    workers: int = 1


def abs_S_closed_range(X: int, k: int) -> np.ndarray:
    """|S(m, k)| for all 0 <= m <= X via the closed form (index 0 unused).

    One smallest-prime-factor sieve factorizes every m; theta_p values are
    shared from the prime-angle table.
    """
    spf = smallest_prime_factor_sieve(X)
    ps, thetas = prime_angles(X)
    theta_of = np.zeros(X + 1, dtype=np.float64)
    theta_of[ps] = thetas

    out = np.zeros(X + 1, dtype=np.float64)
    spf_l = spf.tolist()
    theta_l = theta_of.tolist()
    sin = math.sin
    for m in range(1, X + 1):
        rest = m
        mag = 4.0
        while rest > 1:
            p = spf_l[rest]
            alpha = 1
            rest //= p
            while rest % p == 0:
                alpha += 1
                rest //= p
            if p & 3 == 3:
                if alpha & 1:
                    mag = 0.0
                    break
            elif p != 2:
                x = k * theta_l[p]
                s = sin(x)
                if abs(s) < 1e-12:
                    mag *= alpha + 1
                else:
                    mag *= abs(sin((alpha + 1) * x) / s)
        out[m] = mag
    return out


def avg_abs_S(X: int, k: int, workers: int = 1) -> AngleStatistics:
    """Exact mean (1/X) sum_{m<=X} |S(m, k)| using the closed form.

    k must be a nonzero multiple of 4 for a nonvanishing result; other k
    are flagged and return an identically zero table.  The range is
    reduced in fixed chunks of size X // workers so the result is
    bit-stable for a given worker count.
    """
    if X < 100:
        raise PreconditionError(f"avg_abs_S requires X >= 100, got {X}")
    decades = [10**d for d in range(2, 1 + math.floor(math.log10(X))) ]
    decades = [d for d in decades if d <= X]
    if not decades or decades[-1] != X:
        decades.append(X)

    if k == 0 or k % 4 != 0:
        table = tuple((d, 0.0) for d in decades)
        return AngleStatistics(X, k, 0.0, table, vanishing_k=True, workers=workers)

    values = abs_S_closed_range(X, k)
    chunk = max(1, X // max(1, workers))
    bounds = sorted({*range(chunk, X, chunk), *decades, X})
    partials: list[float] = []
    lo = 1
    decade_means: list[tuple[int, float]] = []
    running = 0.0
    for hi in bounds:
        partials.append(float(values[lo : hi + 1].sum()))
        running = math.fsum(partials)
        if hi in decades:
            decade_means.append((hi, running / hi))
        lo = hi + 1
    mean = running / X
    return AngleStatistics(X, k, mean, tuple(decade_means), workers=workers)


def prime_angle_sum(x: int, k: int) -> float:
    """sum over primes p <= x, p = 1 (mod 4), of |cos(k theta_p)| / p."""
    if k % 4 != 0:
        raise PreconditionError(f"prime_angle_sum requires 4 | k, got k={k}")
    ps, thetas = prime_angles(x)
    if len(ps) == 0:
        return 0.0
    return float(np.sum(np.abs(np.cos(k * thetas)) / ps))


def mertens_check(x: int) -> float:
    """prod_{p<=x} (1 - 1/p) * log(x) * e^gamma; tends to 1 as x grows."""
    if x < 10:
        raise PreconditionError(f"mertens_check requires x >= 10, got {x}")
    spf = smallest_prime_factor_sieve(x)
    idx = np.arange(x + 1)
    ps = idx[(spf == idx) & (idx > 1)]
    log_prod = float(np.log1p(-1.0 / ps).sum())
    return math.exp(log_prod + np.euler_gamma) * math.log(x)


def angular_discrepancy(n: int) -> float:
    """Star discrepancy of the circle angles folded mod pi/2.

    The four-fold unit symmetry makes the full-circle distribution
    trivially periodic, so the fold measures the spread that matters.
    """
    pts = circle_points(n)
    if pts.count == 0:
        raise PreconditionError(f"circle of squared radius {n} has no points")
    folded = np.sort(np.mod(pts.angles, QUARTER_TURN) / QUARTER_TURN)
    m = len(folded)
    i = np.arange(1, m + 1)
    return float(np.maximum(i / m - folded, folded - (i - 1) / m).max())


def landau_count(x: int) -> int:
    """Number of 1 <= n <= x that are sums of two squares."""
    if x < 2:
        raise PreconditionError(f"landau_count requires x >= 2, got {x}")
    mask = np.zeros(x + 1, dtype=bool)
    for a in range(math.isqrt(x) + 1):
        b = np.arange(math.isqrt(x - a * a) + 1)
        mask[a * a + b * b] = True
    return int(mask[1:].sum())


# ---------------------------------------------------------------------------
# CSV emitters
# ---------------------------------------------------------------------------

def write_circle_csv(pts: CirclePointSet, fp: IO[str]) -> None:
    """Rows (n, x, y, theta) in angle order."""
    w = csv.writer(fp)
    w.writerow(["n", "x", "y", "theta"])
    for x, y, t in zip(pts.xs.tolist(), pts.ys.tolist(), pts.angles.tolist()):
        w.writerow([pts.n, x, y, f"{t:.17g}"])


def write_angle_stats_csv(stats: AngleStatistics, fp: IO[str]) -> None:
    """Rows (X, k, mean_abs_S), one per decade."""
    w = csv.writer(fp)
    w.writerow(["X", "k", "mean_abs_S"])
    for x_i, mean_i in stats.decades:
        w.writerow([x_i, stats.k, f"{mean_i:.17g}"])
