"""Collision operators: continuous reference quadrature and lattice Q^h.

The continuous operator is evaluated as

    Q(f, f)(v) = 4 * integral over w of integral over theta of
                 (f(v') f(v*') - f(v) f(v*)) q(|w|, cos theta),

with v' = v + w + R_theta w and v*' = v + w - R_theta w, by a tensor rule
that is spectrally accurate for smooth rapidly decaying f: uniform
trapezoid in theta (periodic) and a uniform midpoint grid in w.

The lattice operator replaces w by h * zeta and the angular integral by
an equal-weight quadrature over the integer points zeta' on the circle
|zeta'| = |zeta|, each point carrying weight 2*pi / r(|zeta|^2) so that
the angular sum converges to the full (unnormalized) angular integral:

    Q^h(f, f)(v) = (2h)^2 * sum over 0 < |zeta| <= R/h of
                   (2*pi / r(|zeta|^2)) * sum over |zeta'| = |zeta| of
                   (f(v') f(v*') - f(v) f(v*)) q(|h zeta|, cos theta),

with v' = h(zeta_v + zeta + zeta'), v*' = h(zeta_v + zeta - zeta') and
theta the angle between zeta' and zeta.  cos theta is computed from the
exact integer dot product zeta . zeta' / n, which keeps the kernel weight
of a collision and of its reverse bitwise identical and makes the
conservation cancellations clean.  The zeta = 0 term is skipped: it has
v' = v*' = v = v* and contributes nothing.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import IO, Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as _cheb

from .circles import circle_points
from .errors import PreconditionError, QuadratureError

Array = np.ndarray


# ---------------------------------------------------------------------------
# Cross sections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    """Cross section q(|w|, cos theta) = q1(|w|) * q2(theta).

    ``maxwell`` is q = 1.  ``product_power`` has q1 = |w|**alpha with
    alpha in [0, 1] and q2 an even trigonometric polynomial given by its
    cosine coefficients (c0 + c1 cos theta + c2 cos 2 theta + ...), which
    is automatically C-infinity; singular angular kernels cannot be
    represented and are rejected here by construction.
    """

    kind: str = "maxwell"
    alpha: float = 0.0
    cos_coeffs: tuple[float, ...] = (1.0,)

    def __post_init__(self) -> None:
        if self.kind not in ("maxwell", "product_power"):
            raise PreconditionError(f"unknown kernel kind {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise PreconditionError(f"alpha must be in [0, 1], got {self.alpha}")
        if not all(math.isfinite(c) for c in self.cos_coeffs):
            raise PreconditionError("cosine coefficients must be finite")
        grid = np.cos(np.linspace(0.0, math.pi, 4096))
        if _cheb.chebval(grid, self.cos_coeffs).min() < -1e-12:
            raise PreconditionError("q2 must be nonnegative")

    @classmethod
    def maxwell(cls) -> "KernelSpec":
        return cls()

    @classmethod
    def product_power(
        cls, alpha: float, cos_coeffs: Sequence[float]
    ) -> "KernelSpec":
        return cls("product_power", alpha, tuple(cos_coeffs))

    def evaluate(self, w_norm, cos_theta):
        """q at speed |w| and scattering cosine; broadcasts over arrays."""
        if self.kind == "maxwell":
            return np.ones(np.broadcast(w_norm, cos_theta).shape)
        # T_m(cos theta) = cos(m theta), so the cosine series is a
        # Chebyshev series in the scattering cosine.
        q2 = _cheb.chebval(np.asarray(cos_theta, dtype=np.float64), self.cos_coeffs)
        if self.alpha == 0.0:
            q1 = 1.0
        else:
            q1 = np.power(w_norm, self.alpha)
        return q1 * q2


# ---------------------------------------------------------------------------
# Closed-form distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Maxwellian:
    """rho / (2 pi T) * exp(-|v - u|^2 / (2T)); annihilates the operator."""

    rho: float = 1.0
    ux: float = 0.0
    uy: float = 0.0
    T: float = 1.0

    def __call__(self, v: Array) -> Array:
        v = np.asarray(v, dtype=np.float64)
        d2 = (v[..., 0] - self.ux) ** 2 + (v[..., 1] - self.uy) ** 2
        return self.rho / (2 * math.pi * self.T) * np.exp(-d2 / (2 * self.T))


@dataclass(frozen=True)
class MaxwellianMixture:
    components: tuple[Maxwellian, ...]

    def __call__(self, v: Array) -> Array:
        v = np.asarray(v, dtype=np.float64)
        out = np.zeros(v.shape[:-1])
        for c in self.components:
            out = out + c(v)
        return out


def bimaxwellian(
    rho1: float = 0.6,
    u1: tuple[float, float] = (1.0, 0.0),
    T1: float = 0.8,
    rho2: float = 0.4,
    u2: tuple[float, float] = (-0.7, 0.3),
    T2: float = 1.2,
) -> MaxwellianMixture:
    """Two-component Maxwellian mixture, asymmetric by default.

    The perfectly symmetric equal-temperature pair has Q(f, f)(0) = 0 by
    an exact gain/loss cancellation, which would make convergence studies
    at v = 0 compare roundoff to roundoff; generic parameters avoid that.
    """
    return MaxwellianMixture(
        (Maxwellian(rho1, u1[0], u1[1], T1), Maxwellian(rho2, u2[0], u2[1], T2))
    )


# ---------------------------------------------------------------------------
# Lattice distributions
# ---------------------------------------------------------------------------

@dataclass
class LatticeDistribution:
    """Nonnegative values f_zeta on the lattice points |h zeta| <= R_support.

    Stored densely on the covering square; lookups outside the support
    disk (or the square) return 0.
    """

    h: float
    support_radius: float
    grid: Array  # (2B+1, 2B+1), grid[ix + B, iy + B] = f at zeta=(ix, iy)

    def __post_init__(self) -> None:
        if self.h <= 0:
            raise PreconditionError("h must be positive")
        self.grid = np.array(self.grid, dtype=np.float64)
        b = self.bound
        if self.grid.shape != (2 * b + 1, 2 * b + 1):
            raise PreconditionError(
                f"grid shape {self.grid.shape} does not match support radius"
            )
        if not np.all(np.isfinite(self.grid)):
            raise PreconditionError("distribution values must be finite")
        if self.grid.min() < 0:
            raise PreconditionError("distribution values must be nonnegative")
        ix = np.arange(-b, b + 1)
        outside = ix[:, None] ** 2 + ix[None, :] ** 2 > (self.support_radius / self.h) ** 2 + 1e-9
        self.grid[outside] = 0.0

    @property
    def bound(self) -> int:
        """Integer coordinate bound B = floor(R_support / h)."""
        return int(math.floor(self.support_radius / self.h + 1e-9))

    @classmethod
    def from_function(
        cls, f: Callable[[Array], Array], h: float, support_radius: float
    ) -> "LatticeDistribution":
        b = int(math.floor(support_radius / h + 1e-9))
        ix = np.arange(-b, b + 1)
        vx, vy = np.meshgrid(ix * h, ix * h, indexing="ij")
        pts = np.stack([vx, vy], axis=-1)
        return cls(h, support_radius, np.asarray(f(pts), dtype=np.float64))

    @classmethod
    def from_values(
        cls, h: float, support_radius: float, values: dict[tuple[int, int], float]
    ) -> "LatticeDistribution":
        b = int(math.floor(support_radius / h + 1e-9))
        grid = np.zeros((2 * b + 1, 2 * b + 1))
        for (zx, zy), val in values.items():
            if abs(zx) > b or abs(zy) > b:
                raise PreconditionError(f"point {(zx, zy)} outside declared support")
            grid[zx + b, zy + b] = val
        return cls(h, support_radius, grid)

    def value(self, zx: int, zy: int) -> float:
        b = self.bound
        if abs(zx) > b or abs(zy) > b:
            return 0.0
        return float(self.grid[zx + b, zy + b])

    def lattice_coords(self, v: Array) -> tuple[int, int]:
        """Integer coordinates of a velocity that must lie on the lattice."""
        z = np.asarray(v, dtype=np.float64) / self.h
        zr = np.rint(z)
        if np.max(np.abs(z - zr)) > 1e-9:
            raise PreconditionError(f"velocity {v} is not on the h-lattice")
        return int(zr[0]), int(zr[1])

    def __call__(self, v: Array) -> Array:
        """Evaluate at lattice velocities; 0 outside the stored support."""
        v = np.atleast_2d(np.asarray(v, dtype=np.float64))
        z = np.rint(v / self.h).astype(np.int64)
        if np.max(np.abs(v / self.h - z)) > 1e-9:
            raise PreconditionError("velocities are not on the h-lattice")
        b = self.bound
        inside = (np.abs(z[..., 0]) <= b) & (np.abs(z[..., 1]) <= b)
        zc = np.clip(z, -b, b)
        vals = self.grid[zc[..., 0] + b, zc[..., 1] + b]
        return np.where(inside, vals, 0.0)

    def scaled(self, factor: float) -> "LatticeDistribution":
        return LatticeDistribution(self.h, self.support_radius, self.grid * factor)


def sample_on_lattice(
    f: Callable[[Array], Array], h: float, support_radius: float
) -> LatticeDistribution:
    """Point-sample a closed-form distribution onto the lattice."""
    return LatticeDistribution.from_function(f, h, support_radius)


# ---------------------------------------------------------------------------
# Collision geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CollisionPair:
    """Velocities before (v, v_star) and after (v_prime, v_star_prime)."""

    v: Array
    v_star: Array
    v_prime: Array
    v_star_prime: Array


def post_collision(v: Array, w: Array, theta: float) -> CollisionPair:
    """v' = v + w + R_theta w, v*' = v + w - R_theta w, v* = v + 2w."""
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    c, s = math.cos(theta), math.sin(theta)
    rw = np.array([c * w[0] - s * w[1], s * w[0] + c * w[1]])
    return CollisionPair(v, v + 2 * w, v + w + rw, v + w - rw)


def lattice_post_collision(
    zeta_v: tuple[int, int], zeta: tuple[int, int], zeta_prime: tuple[int, int]
) -> tuple[tuple[int, int], ...]:
    """Integer-lattice collision quadruple (v, v*, v', v*') in zeta units.

    Exact integer arithmetic; momentum and energy identities hold exactly
    when |zeta'| = |zeta|.
    """
    vx, vy = zeta_v
    zx, zy = zeta
    px, py = zeta_prime
    return (
        (vx, vy),
        (vx + 2 * zx, vy + 2 * zy),
        (vx + zx + px, vy + zy + py),
        (vx + zx - px, vy + zy - py),
    )


@dataclass(frozen=True)
class GValue:
    """Integrand value g_v(w, theta) = (f(v')f(v*') - f(v)f(v*)) q."""

    w: Array
    theta: float
    value: float


def g_eval(
    f: Callable[[Array], Array],
    v: Array,
    w: Array,
    theta: float,
    kernel: KernelSpec,
) -> GValue:
    pair = post_collision(v, w, theta)
    fp = float(np.asarray(f(pair.v_prime[None, :])).ravel()[0])
    fsp = float(np.asarray(f(pair.v_star_prime[None, :])).ravel()[0])
    fv = float(np.asarray(f(pair.v[None, :])).ravel()[0])
    fs = float(np.asarray(f(pair.v_star[None, :])).ravel()[0])
    w_norm = float(np.hypot(w[0], w[1]))
    q = float(kernel.evaluate(w_norm, math.cos(theta)))
    return GValue(np.asarray(w, dtype=np.float64), theta, (fp * fsp - fv * fs) * q)


# ---------------------------------------------------------------------------
# Continuous reference operator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureConfig:
    """Tensor rule: n_w midpoint cells per side on [-r_quad, r_quad]^2
    restricted to the disk, n_theta trapezoid nodes on [-pi, pi)."""

    r_quad: float
    n_w: int = 128
    n_theta: int = 128
    rtol: float = 1e-6
    atol: float = 1e-12


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    self_convergence: float
    config: QuadratureConfig


def angular_integral(
    f: Callable[[Array], Array],
    v: Array,
    kernel: KernelSpec,
    w: Array,
    n_theta: int,
) -> Array:
    """G_v(w) = integral over theta in [-pi, pi) of g_v(w, theta), per w.

    Uniform trapezoid rule, which is spectrally accurate for the periodic
    smooth integrand.  ``w`` has shape (M, 2); the result has shape (M,).
    """
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    w_norm = np.hypot(w[:, 0], w[:, 1])
    thetas = -math.pi + 2 * math.pi * np.arange(n_theta) / n_theta
    f_vv = float(np.asarray(f(v[None, :])).ravel()[0])
    loss = f_vv * np.asarray(f(v[None, :] + 2 * w))  # (M,)

    total = np.zeros(len(w))
    for th in thetas:
        c, s = math.cos(th), math.sin(th)
        rw = np.stack([c * w[:, 0] - s * w[:, 1], s * w[:, 0] + c * w[:, 1]], axis=-1)
        gain = np.asarray(f(v[None, :] + w + rw)) * np.asarray(f(v[None, :] + w - rw))
        total += (gain - loss) * kernel.evaluate(w_norm, c)
    return total * (2 * math.pi / n_theta)


def midpoint_disk(r_quad: float, n_w: int) -> tuple[Array, float]:
    """Midpoints of the n_w x n_w cells of [-r, r]^2 inside the disk."""
    step = 2 * r_quad / n_w
    mids = -r_quad + step * (np.arange(n_w) + 0.5)
    wx, wy = np.meshgrid(mids, mids, indexing="ij")
    keep = wx**2 + wy**2 <= r_quad**2
    return np.stack([wx[keep], wy[keep]], axis=-1), step


def _tensor_level(
    f: Callable[[Array], Array],
    v: Array,
    kernel: KernelSpec,
    r_quad: float,
    n_w: int,
    n_theta: int,
) -> float:
    w, step = midpoint_disk(r_quad, n_w)
    angular = angular_integral(f, v, kernel, w, n_theta)
    return 4.0 * step * step * float(angular.sum())


def q_reference(
    f: Callable[[Array], Array],
    v: Array,
    kernel: KernelSpec,
    quad: QuadratureConfig,
) -> QuadratureResult:
    """Reference Q(f, f)(v) with a Richardson-style self-convergence check.

    Evaluates the tensor rule at the configured resolution and at double
    resolution; raises QuadratureError when the two levels disagree
    beyond quad.rtol (relative, floored by quad.atol).
    """
    coarse = _tensor_level(f, v, kernel, quad.r_quad, quad.n_w, quad.n_theta)
    fine = _tensor_level(f, v, kernel, quad.r_quad, 2 * quad.n_w, 2 * quad.n_theta)
    err = abs(fine - coarse)
    if err > quad.rtol * max(abs(fine), abs(coarse)) + quad.atol:
        raise QuadratureError(
            f"quadrature did not self-converge: levels {coarse:.6e} vs {fine:.6e}"
        )
    return QuadratureResult(fine, err, quad)


# ---------------------------------------------------------------------------
# Lattice operator
# ---------------------------------------------------------------------------

def _circle_group(n: int) -> tuple[Array, Array, Array] | None:
    """(xs, ys, cos-theta matrix) for the circle |zeta|^2 = n, or None."""
    pts = circle_points(n)
    if pts.count == 0:
        return None
    xs, ys = pts.xs, pts.ys
    dots = xs[:, None] * xs[None, :] + ys[:, None] * ys[None, :]
    return xs, ys, dots.astype(np.float64) / n


def q_discrete_detailed(
    f: LatticeDistribution,
    v: Array,
    kernel: KernelSpec,
    R: float,
) -> tuple[float, float]:
    """Q^h(f, f)(v) plus the gross magnitude of its summands.

    The second value, (2h)^2 * sum of weights * (gain + loss), is the
    natural scale against which the signed total cancels; it sets the
    roundoff floor for near-equilibrium states.
    """
    h = f.h
    zvx, zvy = f.lattice_coords(np.asarray(v, dtype=np.float64))
    n_max = int(math.floor((R / h) ** 2 + 1e-9))
    b = f.bound
    grid = f.grid
    f_v = f.value(zvx, zvy)

    per_circle: list[float] = []
    gross = 0.0
    for n in range(1, n_max + 1):
        group = _circle_group(n)
        if group is None:
            continue
        xs, ys, cos_theta = group
        r = len(xs)
        q = kernel.evaluate(h * math.sqrt(n), cos_theta)  # (r, r)

        def _gather(ax: Array, ay: Array) -> Array:
            inside = (np.abs(ax) <= b) & (np.abs(ay) <= b)
            vals = grid[np.clip(ax, -b, b) + b, np.clip(ay, -b, b) + b]
            return np.where(inside, vals, 0.0)

        gx1 = zvx + xs[:, None] + xs[None, :]
        gy1 = zvy + ys[:, None] + ys[None, :]
        gx2 = zvx + xs[:, None] - xs[None, :]
        gy2 = zvy + ys[:, None] - ys[None, :]
        gain = _gather(gx1, gy1) * _gather(gx2, gy2)
        loss = f_v * _gather(zvx + 2 * xs, zvy + 2 * ys)  # (r,)
        per_circle.append(2 * math.pi / r * float(((gain - loss[:, None]) * q).sum()))
        gross += 2 * math.pi / r * float(((gain + loss[:, None]) * q).sum())
    return (2 * h) ** 2 * math.fsum(per_circle), (2 * h) ** 2 * gross


def q_discrete(
    f: LatticeDistribution,
    v: Array,
    kernel: KernelSpec,
    R: float,
) -> float:
    """Lattice collision operator Q^h(f, f) at a single lattice velocity."""
    return q_discrete_detailed(f, v, kernel, R)[0]


@dataclass
class _CirclePlan:
    weights: Array  # (r*r,) kernel weights (2 pi / r) q_ij
    off_gain1: Array  # (r*r,) flat offsets of zeta + zeta'
    off_gain2: Array  # (r*r,) flat offsets of zeta - zeta'
    off_star: Array  # (r,) flat offsets of 2 zeta
    row_weights: Array  # (r,) per-outer-point weight sums


class LatticeCollisionOperator:
    """Q^h evaluated on a whole grid of output velocities at once.

    Precomputes, per circle |zeta|^2 = n <= (R/h)^2, the flat index
    offsets of the gain and loss lookups on a zero-padded copy of the
    state, plus the kernel weights.  apply() is then a handful of numpy
    gathers per circle, cheap enough to sit inside an RK4 loop.
    """

    def __init__(self, h: float, R: float, kernel: KernelSpec, out_bound: int):
        if h <= 0 or R <= 0:
            raise PreconditionError("h and R must be positive")
        self.h = h
        self.R = R
        self.kernel = kernel
        self.out_bound = out_bound
        self.reach = int(math.floor(R / h + 1e-9))
        self.pad_bound = out_bound + 2 * self.reach
        side = 2 * self.pad_bound + 1
        self._side = side

        ix = np.arange(-out_bound, out_bound + 1)
        ox, oy = np.meshgrid(ix, ix, indexing="ij")
        self._out_flat = ((ox + self.pad_bound) * side + (oy + self.pad_bound)).ravel()

        self._plans: list[_CirclePlan] = []
        n_max = int(math.floor((R / h) ** 2 + 1e-9))
        for n in range(1, n_max + 1):
            group = _circle_group(n)
            if group is None:
                continue
            xs, ys, cos_theta = group
            r = len(xs)
            q = np.asarray(
                kernel.evaluate(h * math.sqrt(n), cos_theta), dtype=np.float64
            )
            weights = (2 * math.pi / r) * q
            o1 = ((xs[:, None] + xs[None, :]) * side + ys[:, None] + ys[None, :]).ravel()
            o2 = ((xs[:, None] - xs[None, :]) * side + ys[:, None] - ys[None, :]).ravel()
            ostar = 2 * xs * side + 2 * ys
            self._plans.append(
                _CirclePlan(
                    weights.ravel(), o1, o2, ostar, weights.sum(axis=1)
                )
            )

    def pad_state(self, f: LatticeDistribution) -> Array:
        """Embed a distribution's grid into the operator's padded frame."""
        if abs(f.h - self.h) > 1e-12:
            raise PreconditionError("distribution step does not match operator")
        b = f.bound
        if b > self.pad_bound:
            raise PreconditionError("distribution grid exceeds operator frame")
        padded = np.zeros((self._side, self._side))
        lo = self.pad_bound - b
        padded[lo : lo + 2 * b + 1, lo : lo + 2 * b + 1] = f.grid
        return padded

    def apply_padded(self, padded: Array) -> Array:
        """Q^h on the output grid, given the padded state values."""
        flat = padded.ravel()
        base = self._out_flat
        f_self = flat[base]
        total = np.zeros(len(base))
        for plan in self._plans:
            g1 = flat[base[:, None] + plan.off_gain1[None, :]]
            g2 = flat[base[:, None] + plan.off_gain2[None, :]]
            gain = (g1 * g2) @ plan.weights
            star = flat[base[:, None] + plan.off_star[None, :]]
            loss = f_self * (star @ plan.row_weights)
            total += gain - loss
        side_out = 2 * self.out_bound + 1
        return (2 * self.h) ** 2 * total.reshape(side_out, side_out)

    def apply(self, f: LatticeDistribution) -> Array:
        return self.apply_padded(self.pad_state(f))

    def output_velocities(self) -> tuple[Array, Array]:
        ix = np.arange(-self.out_bound, self.out_bound + 1) * self.h
        return np.meshgrid(ix, ix, indexing="ij")


class FastCollisionOperator:
    """Grid Q^h with the angular pair sum factorized per cosine harmonic.

    For kernels q2(theta) = sum_m c_m cos(m theta) the double sum over
    (zeta, zeta') splits as cos(m(phi_j - phi_i)) = cos cos + sin sin,
    so each circle costs O(r * harmonics) shifted-array operations
    instead of O(r^2).  Same operator as LatticeCollisionOperator up to
    floating-point association; use this one inside time-stepping loops.
    """

    def __init__(self, h: float, R: float, kernel: KernelSpec, out_bound: int):
        if h <= 0 or R <= 0:
            raise PreconditionError("h and R must be positive")
        self.h = h
        self.R = R
        self.kernel = kernel
        self.out_bound = out_bound
        self.reach = int(math.floor(R / h + 1e-9))
        self.mid_bound = out_bound + self.reach
        self.pad_bound = out_bound + 2 * self.reach
        self._side = 2 * self.pad_bound + 1
        self._mid_side = 2 * self.mid_bound + 1
        self._out_side = 2 * self.out_bound + 1

        if kernel.kind == "maxwell":
            harmonics = [(0, 1.0)]
        else:
            harmonics = [
                (m, c) for m, c in enumerate(kernel.cos_coeffs) if c != 0.0
            ]
        self._circles = []
        n_max = int(math.floor((R / h) ** 2 + 1e-9))
        for n in range(1, n_max + 1):
            group = _circle_group(n)
            if group is None:
                continue
            xs, ys, cos_theta = group
            r = len(xs)
            q1 = 1.0 if kernel.kind == "maxwell" else float(h * math.sqrt(n)) ** kernel.alpha
            phi = np.arctan2(ys, xs)
            terms = []
            for m, c in harmonics:
                coef = 2 * math.pi / r * q1 * c
                terms.append((m, coef, np.cos(m * phi), np.sin(m * phi)))
            # Loss weights from the exact integer scattering cosines.
            q = np.asarray(
                kernel.evaluate(h * math.sqrt(n), cos_theta), dtype=np.float64
            )
            row_weights = (2 * math.pi / r) * q.sum(axis=1)
            self._circles.append((xs, ys, terms, row_weights))

    def pad_state(self, grid: Array, bound: int) -> Array:
        padded = np.zeros((self._side, self._side))
        lo = self.pad_bound - bound
        padded[lo : lo + 2 * bound + 1, lo : lo + 2 * bound + 1] = grid
        return padded

    def _mid_view(self, padded: Array, dx: int, dy: int) -> Array:
        lo = self.pad_bound - self.mid_bound
        return padded[
            lo + dx : lo + dx + self._mid_side, lo + dy : lo + dy + self._mid_side
        ]

    def _out_view(self, arr: Array, dx: int, dy: int, inner_bound: int) -> Array:
        lo = inner_bound - self.out_bound
        return arr[
            lo + dx : lo + dx + self._out_side, lo + dy : lo + dy + self._out_side
        ]

    def apply_padded(self, padded: Array) -> Array:
        total = np.zeros((self._out_side, self._out_side))
        f_self = self._out_view(padded, 0, 0, self.pad_bound)
        for xs, ys, terms, row_weights in self._circles:
            r = len(xs)
            prods = np.empty((r, self._mid_side, self._mid_side))
            for j in range(r):
                np.multiply(
                    self._mid_view(padded, xs[j], ys[j]),
                    self._mid_view(padded, -xs[j], -ys[j]),
                    out=prods[j],
                )
            prods_flat = prods.reshape(r, -1)
            for m, coef, cos_i, sin_i in terms:
                wc = (cos_i @ prods_flat).reshape(self._mid_side, self._mid_side)
                for i in range(r):
                    if cos_i[i] != 0.0:
                        total += (coef * cos_i[i]) * self._out_view(
                            wc, xs[i], ys[i], self.mid_bound
                        )
                if m != 0:
                    ws = (sin_i @ prods_flat).reshape(self._mid_side, self._mid_side)
                    for i in range(r):
                        if sin_i[i] != 0.0:
                            total += (coef * sin_i[i]) * self._out_view(
                                ws, xs[i], ys[i], self.mid_bound
                            )
            loss = np.zeros((self._out_side, self._out_side))
            for i in range(r):
                loss += row_weights[i] * self._out_view(
                    padded, 2 * xs[i], 2 * ys[i], self.pad_bound
                )
            total -= f_self * loss
        return (2 * self.h) ** 2 * total

    def apply_grid(self, grid: Array, bound: int) -> Array:
        return self.apply_padded(self.pad_state(grid, bound))

    def apply(self, f: LatticeDistribution) -> Array:
        if abs(f.h - self.h) > 1e-12:
            raise PreconditionError("distribution step does not match operator")
        if f.bound > self.pad_bound:
            raise PreconditionError("distribution grid exceeds operator frame")
        return self.apply_grid(f.grid, f.bound)


@dataclass(frozen=True)
class InvariantRates:
    """Totals of Q^h against the collision invariants 1, v, |v|^2."""

    mass_rate: float
    momentum_rate: tuple[float, float]
    energy_rate: float
    normalization: float  # sum |Q^h| (1 + |v|^2)


def collision_invariants(
    f: LatticeDistribution, kernel: KernelSpec, R: float
) -> InvariantRates:
    """sum_v Q^h(v) (1, v, |v|^2) over every v where Q^h can be nonzero.

    Gains vanish beyond sqrt(2) times the support radius (energy bound),
    so that is the output grid.  All reductions use compensated summation.
    """
    out_bound = int(math.ceil(math.sqrt(2.0) * f.bound)) + 1
    op = LatticeCollisionOperator(f.h, R, kernel, out_bound)
    q = op.apply(f)
    vx, vy = op.output_velocities()
    v2 = vx**2 + vy**2
    mass = math.fsum(q.ravel())
    mom_x = math.fsum((q * vx).ravel())
    mom_y = math.fsum((q * vy).ravel())
    energy = math.fsum((q * v2).ravel())
    norm = math.fsum((np.abs(q) * (1 + v2)).ravel())
    return InvariantRates(mass, (mom_x, mom_y), energy, norm)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def write_lattice_csv(f: LatticeDistribution, fp: IO[str]) -> None:
    """JSON header line, then rows (zeta_x, zeta_y, value) inside the disk."""
    fp.write("# " + json.dumps({"h": f.h, "R_support": f.support_radius}) + "\n")
    w = csv.writer(fp)
    w.writerow(["zeta_x", "zeta_y", "value"])
    b = f.bound
    r2max = (f.support_radius / f.h) ** 2 + 1e-9
    for ix in range(-b, b + 1):
        for iy in range(-b, b + 1):
            if ix * ix + iy * iy <= r2max:
                w.writerow([ix, iy, f"{f.grid[ix + b, iy + b]:.17g}"])


def read_lattice_csv(fp: IO[str]) -> LatticeDistribution:
    header = fp.readline()
    if not header.startswith("#"):
        raise PreconditionError("missing JSON header line")
    meta = json.loads(header[1:].strip())
    rows = list(csv.reader(fp))
    if rows and rows[0] == ["zeta_x", "zeta_y", "value"]:
        rows = rows[1:]
    values = {(int(r[0]), int(r[1])): float(r[2]) for r in rows if r}
    return LatticeDistribution.from_values(
        float(meta["h"]), float(meta["R_support"]), values
    )


def write_qh_csv(
    q: Array, h: float, out_bound: int, fp: IO[str]
) -> None:
    """Rows (zeta_x, zeta_y, Qh_value) for a grid evaluation of Q^h."""
    fp.write("# " + json.dumps({"h": h}) + "\n")
    w = csv.writer(fp)
    w.writerow(["zeta_x", "zeta_y", "Qh_value"])
    for ix in range(-out_bound, out_bound + 1):
        for iy in range(-out_bound, out_bound + 1):
            w.writerow([ix, iy, f"{q[ix + out_bound, iy + out_bound]:.17g}"])
