"""Experiment drivers: convergence studies, error budgets, figure data,
the max-point-count search, and the space-homogeneous relaxation run.

These are the operations behind the CLI.  They combine the exact circle
machinery with the collision operators and emit plain data structures
that the CLI serializes to CSV.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Callable, Iterable

import numpy as np

from . import circles
from .collision import (
    Array,
    FastCollisionOperator,
    KernelSpec,
    LatticeDistribution,
    QuadratureConfig,
    angular_integral,
    midpoint_disk,
    q_discrete,
    q_reference,
    sample_on_lattice,
)
from .errors import PositivityLossError, PreconditionError
from .numtheory import is_prime

# ---------------------------------------------------------------------------
# Angular Fourier diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AngularFourier:
    """Trapezoid-rule Fourier coefficients of theta -> g_v(h zeta, theta)."""

    ks: np.ndarray  # -K .. K
    coeffs: np.ndarray  # complex, aligned with ks
    c3_fit: float  # max_k |g_hat(k)| * (1 + k^2)


def angular_fourier(
    f_spec: Callable[[Array], Array],
    kernel: KernelSpec,
    v: Array,
    zeta: tuple[int, int],
    h: float,
    K: int,
) -> AngularFourier:
    """Fourier coefficients g_hat(zeta, k) = (1/2pi) int g e^{-ik theta}.

    Sampled on a uniform grid and transformed with the FFT, so the
    coefficients are spectrally accurate for smooth integrands.
    """
    if K < 1:
        raise PreconditionError(f"K must be >= 1, got {K}")
    n = max(256, 4 * K + 4)
    j = np.arange(n)
    thetas = -math.pi + 2 * math.pi * j / n
    v = np.asarray(v, dtype=np.float64)
    w = h * np.asarray(zeta, dtype=np.float64)
    w_norm = float(np.hypot(w[0], w[1]))

    cos_t = np.cos(thetas)
    sin_t = np.sin(thetas)
    rw = np.stack([cos_t * w[0] - sin_t * w[1], sin_t * w[0] + cos_t * w[1]], axis=-1)
    vp = v[None, :] + w[None, :] + rw
    vsp = v[None, :] + w[None, :] - rw
    f_v = float(np.asarray(f_spec(v[None, :])).ravel()[0])
    f_star = float(np.asarray(f_spec(v[None, :] + 2 * w[None, :])).ravel()[0])
    g = (np.asarray(f_spec(vp)) * np.asarray(f_spec(vsp)) - f_v * f_star)
    g = g * kernel.evaluate(w_norm, cos_t)

    # theta_j = -pi + 2 pi j / n, so the DFT picks up a (-1)^k twiddle.
    spectrum = np.fft.fft(g) / n
    ks = np.arange(-K, K + 1)
    coeffs = np.array(
        [(-1.0) ** k * spectrum[k % n] for k in ks], dtype=np.complex128
    )
    c3 = float(np.max(np.abs(coeffs) * (1 + ks.astype(np.float64) ** 2)))
    return AngularFourier(ks, coeffs, c3)


# ---------------------------------------------------------------------------
# Equidistribution error term
# ---------------------------------------------------------------------------

def equid_term(h: float, R: float, M: int) -> float:
    """(2h)^2 * max over 0 < |k| < M, 4 | k, of sum_{zeta} |S(|zeta|^2, k)| / r.

    The sum over lattice points zeta in the truncation disk collapses to
    sum over 1 <= n <= (R/h)^2 of |S(n, k)|, evaluated with the closed
    form; frequencies not divisible by 4 contribute nothing.
    """
    if M < 5:
        raise PreconditionError(f"M must be >= 5 so some 4 | k contributes, got {M}")
    x = int(math.floor((R / h) ** 2 + 1e-9))
    best = 0.0
    for k in range(4, M, 4):
        values = circles.abs_S_closed_range(x, k)
        best = max(best, float(values[1:].sum()))
    return (2 * h) ** 2 * best


# ---------------------------------------------------------------------------
# Convergence study with the four-term error budget
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorBudget:
    """Observed four-term error decomposition for one (v, h, R, M).

    tail_R and riemann_h are measured directly by quadrature; the Fourier
    tail and equidistribution terms use the fitted angular-decay constant
    C3.  All terms are nonnegative; only tail_R is a rigorous bound on
    the piece it describes, so no inequality against total_observed is
    implied.
    """

    tail_R: float
    riemann_h: float
    fourier_tail_M: float
    equid: float
    total_observed: float
    v: tuple[float, float]
    h: float
    R: float
    M: int
    fitted: dict[str, float]


@dataclass(frozen=True)
class ConvergenceRow:
    h: float
    qh: float
    qref: float
    abs_err: float
    budget: ErrorBudget


@dataclass(frozen=True)
class ConvergenceStudy:
    rows: tuple[ConvergenceRow, ...]
    qref: float
    qref_self_convergence: float


def converge_study(
    f_spec: Callable[[Array], Array],
    kernel: KernelSpec,
    v: Array,
    h_list: Iterable[float],
    R: float,
    M_diag: int = 64,
    quad: QuadratureConfig | None = None,
    tail_factor: float = 2.0,
) -> ConvergenceStudy:
    """Consistency experiment: Q^h against the quadrature reference.

    For each h the closed-form state is sampled on a lattice wide enough
    that every velocity reached by the truncated sum sees the true f, so
    the comparison isolates discretization error.
    """
    h_list = list(h_list)
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise PreconditionError("h_list must be strictly decreasing")
    v = np.asarray(v, dtype=np.float64)
    if quad is None:
        quad = QuadratureConfig(r_quad=tail_factor * R)
    ref = q_reference(f_spec, v, kernel, quad)

    # Shared diagnostics: the tail of |G_v| outside R and the fitted C3.
    n_tail = max(64, quad.n_w)
    w_all, step_t = midpoint_disk(tail_factor * R, 2 * n_tail)
    norms = np.hypot(w_all[:, 0], w_all[:, 1])
    outside = norms >= R
    g_out = angular_integral(f_spec, v, kernel, w_all[outside], quad.n_theta)
    tail = 4.0 * step_t * step_t * float(np.abs(g_out).sum())

    c3 = 0.0
    probe_radius = max(1, int(round(R / (2 * max(h_list)))))
    for zeta in ((probe_radius, 0), (0, probe_radius), (probe_radius, probe_radius)):
        af = angular_fourier(f_spec, kernel, v, zeta, max(h_list), K=M_diag)
        c3 = max(c3, af.c3_fit)
    s_m = 2 * sum(1.0 / (1 + k * k) for k in range(1, M_diag))

    rows = []
    for h in h_list:
        support = float(np.hypot(v[0], v[1])) + 2 * R + 2 * h
        f_h = sample_on_lattice(f_spec, h, support)
        qh = q_discrete(f_h, v, kernel, R)
        abs_err = abs(qh - ref.value)

        # Inner-disk quadrature vs the lattice Riemann sum of the same
        # exact-angular G_v; this isolates the outer-discretization error.
        inner = 4.0 * step_t * step_t * float(
            angular_integral(f_spec, v, kernel, w_all[~outside], quad.n_theta).sum()
        )
        reach = int(math.floor(R / h + 1e-9))
        ix = np.arange(-reach, reach + 1)
        zx, zy = np.meshgrid(ix, ix, indexing="ij")
        keep = (zx**2 + zy**2 <= (R / h) ** 2 + 1e-9) & ((zx != 0) | (zy != 0))
        lattice_w = h * np.stack([zx[keep], zy[keep]], axis=-1).astype(np.float64)
        riemann = (2 * h) ** 2 * float(
            angular_integral(f_spec, v, kernel, lattice_w, quad.n_theta).sum()
        )
        riemann_err = abs(inner - riemann)

        n_zeta = int(keep.sum())
        fourier_tail = (2 * h) ** 2 * n_zeta * 2 * math.pi * 2 * c3 / M_diag
        equid = 2 * math.pi * c3 * s_m * equid_term(h, R, M_diag)
        budget = ErrorBudget(
            tail_R=tail,
            riemann_h=riemann_err,
            fourier_tail_M=fourier_tail,
            equid=equid,
            total_observed=abs_err,
            v=(float(v[0]), float(v[1])),
            h=h,
            R=R,
            M=M_diag,
            fitted={
                "C1": tail * R * R,
                "C2": riemann_err / (R * R * h),
                "C3": c3,
                "C4": 8 * math.pi * c3,
            },
        )
        rows.append(ConvergenceRow(h, qh, ref.value, abs_err, budget))
    return ConvergenceStudy(tuple(rows), ref.value, ref.self_convergence)


# ---------------------------------------------------------------------------
# Figure data: lattice points on point-rich circles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FigureQuery:
    """Box [coord_min, coord_max]^2 filtered by a point-count threshold."""

    coord_min: int
    coord_max: int
    threshold: int
    comparison: str = "ge"  # "ge" for >=, "gt" for >

    def __post_init__(self) -> None:
        if not 0 <= self.coord_min <= self.coord_max <= 20000:
            raise PreconditionError("bounds must satisfy 0 <= min <= max <= 20000")
        if self.threshold % 4 != 0 or self.threshold <= 0:
            raise PreconditionError("threshold must be a positive multiple of 4")
        if self.comparison not in ("ge", "gt"):
            raise PreconditionError("comparison must be 'ge' or 'gt'")


@dataclass(frozen=True)
class FigureData:
    query: FigureQuery
    points: np.ndarray  # (N, 2) int64, lexicographically sorted
    n_values: np.ndarray  # (N,) squared radii
    r_values: np.ndarray  # (N,) point counts of the circles

    @property
    def count(self) -> int:
        return len(self.points)


def _r2_range_sieve(n_lo: int, n_hi: int, segment: int = 4_000_000):
    """Yield (offset n0, r2 array) for n in [n_lo, n_hi] by segments.

    Segmented factorization over the range: every prime power up to
    sqrt(n_hi) is divided out with vectorized slice arithmetic, leaving
    at most one prime factor per entry.
    """
    spf = circles.smallest_prime_factor_sieve(math.isqrt(n_hi))
    idx = np.arange(len(spf))
    primes = idx[(spf == idx) & (idx > 1)]

    for seg_lo in range(n_lo, n_hi + 1, segment):
        seg_hi = min(seg_lo + segment - 1, n_hi)
        size = seg_hi - seg_lo + 1
        rem = np.arange(seg_lo, seg_hi + 1, dtype=np.int64)
        dcount = np.ones(size, dtype=np.int64)
        bad = np.zeros(size, dtype=bool)
        cnt = np.empty(size, dtype=np.int64)
        for p in primes.tolist():
            if p * p > seg_hi:
                break
            cnt[:] = 0
            q = p
            while q <= seg_hi:
                start = (-seg_lo) % q
                cnt[start::q] += 1
                q *= p
            mask = cnt > 0
            e = cnt[mask]
            rem[mask] //= p**e
            if p % 4 == 1:
                dcount[mask] *= e + 1
            elif p % 4 == 3:
                bad[mask] |= (e & 1) == 1
        # Leftover factor is prime (or 1).
        left = rem > 1
        lv = rem[left]
        d_extra = np.where(lv % 4 == 1, 2, 1)
        dcount[left] *= d_extra
        bad[left] |= lv % 4 == 3
        r2_vals = np.where(bad, 0, 4 * dcount)
        if seg_lo == 0:
            r2_vals[0] = 0  # n = 0 is not a circle
        yield seg_lo, r2_vals


def figure_data(query: FigureQuery) -> FigureData:
    """All box points whose circles meet the point-count threshold.

    Circles are found by a segmented multiplicative sieve for r2 over the
    reachable range of squared radii; their points are then enumerated
    exactly and filtered to the box.
    """
    lo, hi = query.coord_min, query.coord_max
    n_lo = max(1, 2 * lo * lo) if lo > 0 else 1
    n_hi = 2 * hi * hi
    cut = query.threshold if query.comparison == "ge" else query.threshold + 1

    pts_x: list[int] = []
    pts_y: list[int] = []
    pts_n: list[int] = []
    pts_r: list[int] = []
    for seg_lo, r2_vals in _r2_range_sieve(n_lo, n_hi):
        good = np.nonzero(r2_vals >= cut)[0]
        for off in good.tolist():
            n = seg_lo + off
            pts = circles.circle_points(n)
            keep = (
                (pts.xs >= lo) & (pts.xs <= hi) & (pts.ys >= lo) & (pts.ys <= hi)
            )
            for x, y in zip(pts.xs[keep].tolist(), pts.ys[keep].tolist()):
                pts_x.append(x)
                pts_y.append(y)
                pts_n.append(n)
                pts_r.append(pts.count)

    points = np.stack(
        [np.asarray(pts_x, dtype=np.int64), np.asarray(pts_y, dtype=np.int64)],
        axis=-1,
    ) if pts_x else np.zeros((0, 2), dtype=np.int64)
    n_arr = np.asarray(pts_n, dtype=np.int64)
    r_arr = np.asarray(pts_r, dtype=np.int64)
    if len(points):
        order = np.lexsort((points[:, 1], points[:, 0]))
        points, n_arr, r_arr = points[order], n_arr[order], r_arr[order]
    return FigureData(query, points, n_arr, r_arr)


def write_figure_csv(data: FigureData, fp: IO[str]) -> None:
    w = csv.writer(fp)
    w.writerow(["zeta1", "zeta2", "n", "r2"])
    for (x, y), n, r in zip(data.points.tolist(), data.n_values.tolist(), data.r_values.tolist()):
        w.writerow([x, y, n, r])


# ---------------------------------------------------------------------------
# Max point count search
# ---------------------------------------------------------------------------

def _primes_1mod4_ascending(limit_product: int) -> list[int]:
    """Consecutive primes p = 1 (mod 4) while their running product fits."""
    out: list[int] = []
    running = 1
    p = 5
    while running * p <= limit_product:
        if p % 4 == 1 and is_prime(p):
            out.append(p)
            running *= p
        p += 2
    return out


def max_r_search(radius_bound: float) -> tuple[int, int]:
    """(n, r2(n)) maximizing r2 over n <= radius_bound^2; smallest such n.

    Only primes p = 1 (mod 4) help: powers of two and squares of inert
    primes grow n without adding representations, so they are pruned.
    An optimal n can be rearranged to use consecutive such primes from 5
    up with non-increasing exponents, which the DFS enumerates.
    """
    if not 1 <= radius_bound <= 20000:
        raise PreconditionError("radius_bound must be in [1, 20000]")
    n_max = int(radius_bound) ** 2 if radius_bound == int(radius_bound) else int(
        radius_bound * radius_bound + 1e-9
    )
    primes = _primes_1mod4_ascending(n_max)
    best_d = 1  # n = 1 carries r2 = 4
    best_n = 1

    def rec(idx: int, n: int, d: int, max_exp: int) -> None:
        nonlocal best_d, best_n
        if d > best_d or (d == best_d and n < best_n):
            best_d, best_n = d, n
        if idx >= len(primes):
            return
        p = primes[idx]
        value = n
        for e in range(1, max_exp + 1):
            value *= p
            if value > n_max:
                break
            rec(idx + 1, value, d * (e + 1), e)

    rec(0, 1, 1, 64)
    return best_n, 4 * best_d


# ---------------------------------------------------------------------------
# Space-homogeneous relaxation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RelaxState:
    """One snapshot of the homogeneous relaxation df/dt = Q^h(f, f)."""

    t: float
    f: LatticeDistribution
    H: float  # sum f log f over the support, 0 log 0 = 0
    mass: float
    momentum: tuple[float, float]
    energy: float


def _entropy(grid: Array) -> float:
    flat = grid.ravel()
    pos = flat[flat > 0]
    return float(math.fsum(pos * np.log(pos)))


def relax_simulate(
    f0: LatticeDistribution,
    kernel: KernelSpec,
    R: float,
    dt: float,
    steps: int,
    record_every: int = 1,
) -> list[RelaxState]:
    """Explicit RK4 integration of df/dt = Q^h(f, f) from f0.

    The state lives on a disk sqrt(2) wider than the initial support so
    every collision gain stays on the grid (up to exponentially small
    tails); moments and H are recorded per step.  Aborts with
    PositivityLossError if any value drops below -1e-12 * max f, the
    sign that dt is too large.
    """
    if dt <= 0 or steps < 1:
        raise PreconditionError("dt must be positive and steps >= 1")
    h = f0.h
    state_bound = int(math.ceil(math.sqrt(2.0) * f0.bound)) + 1
    op = FastCollisionOperator(h, R, kernel, out_bound=state_bound)

    side = 2 * state_bound + 1
    state = np.zeros((side, side))
    lo = state_bound - f0.bound
    state[lo : lo + 2 * f0.bound + 1, lo : lo + 2 * f0.bound + 1] = f0.grid

    ix = np.arange(-state_bound, state_bound + 1)
    disk = (ix[:, None] ** 2 + ix[None, :] ** 2) <= state_bound**2 + 1e-9
    vx, vy = np.meshgrid(ix * h, ix * h, indexing="ij")
    v2 = vx**2 + vy**2
    support_radius = state_bound * h

    def rate(s: Array) -> Array:
        return op.apply_grid(s, state_bound) * disk

    def snapshot(t: float, s: Array) -> RelaxState:
        clamped = np.maximum(s, 0.0)
        f = LatticeDistribution(h, support_radius, clamped)
        return RelaxState(
            t,
            f,
            _entropy(clamped),
            math.fsum((clamped * (h * h)).ravel()),
            (
                math.fsum((clamped * vx * (h * h)).ravel()),
                math.fsum((clamped * vy * (h * h)).ravel()),
            ),
            math.fsum((clamped * v2 * (h * h)).ravel()),
        )

    trajectory = [snapshot(0.0, state)]
    for step in range(1, steps + 1):
        k1 = rate(state)
        k2 = rate(state + 0.5 * dt * k1)
        k3 = rate(state + 0.5 * dt * k2)
        k4 = rate(state + dt * k3)
        state = state + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        floor = -1e-12 * float(state.max())
        if float(state.min()) < floor:
            raise PositivityLossError(
                f"positivity lost at step {step}: min f = {state.min():.3e}, "
                f"threshold {floor:.3e}; reduce dt"
            )
        if step % record_every == 0 or step == steps:
            trajectory.append(snapshot(step * dt, state))
    return trajectory


def write_relax_csv(trajectory: list[RelaxState], fp: IO[str]) -> None:
    w = csv.writer(fp)
    w.writerow(["t", "mass", "momentum_x", "momentum_y", "energy", "H"])
    for s in trajectory:
        w.writerow(
            [
                f"{s.t:.17g}",
                f"{s.mass:.17g}",
                f"{s.momentum[0]:.17g}",
                f"{s.momentum[1]:.17g}",
                f"{s.energy:.17g}",
                f"{s.H:.17g}",
            ]
        )


def write_convergence_csv(study: ConvergenceStudy, fp: IO[str]) -> None:
    w = csv.writer(fp)
    w.writerow(
        ["h", "Qh", "Qref", "abs_err", "tail_R", "riemann_h", "fourier_tail_M", "equid"]
    )
    for row in study.rows:
        b = row.budget
        w.writerow(
            [
                f"{row.h:.17g}",
                f"{row.qh:.17g}",
                f"{row.qref:.17g}",
                f"{row.abs_err:.17g}",
                f"{b.tail_R:.17g}",
                f"{b.riemann_h:.17g}",
                f"{b.fourier_tail_M:.17g}",
                f"{b.equid:.17g}",
            ]
        )
