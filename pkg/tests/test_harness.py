import io
import math

import numpy as np
import pytest

from dvm2d import circles, harness
from dvm2d import collision as co
from dvm2d.errors import PositivityLossError, PreconditionError

MAXWELL = co.KernelSpec.maxwell()


# ---------------------------------------------------------------------------
# angular_fourier
# ---------------------------------------------------------------------------

def test_angular_fourier_maxwellian_vanishes():
    m = co.Maxwellian(1.0, 0.2, -0.1, 1.0)
    af = harness.angular_fourier(m, MAXWELL, np.zeros(2), (3, 1), 0.25, K=16)
    assert np.abs(af.coeffs).max() <= 1e-10


def test_angular_fourier_mirror_symmetric_config_is_real_even():
    """Reflection-symmetric setup: f symmetric about the x-axis, v and
    zeta on it, q2 even; then g is even in theta, so the coefficients
    are real and ghat(k) = ghat(-k)."""
    bi = co.MaxwellianMixture(
        (co.Maxwellian(0.5, 1.0, 0.0, 0.9), co.Maxwellian(0.5, -1.0, 0.0, 0.9))
    )
    af = harness.angular_fourier(bi, MAXWELL, np.zeros(2), (4, 0), 0.25, K=16)
    scale = np.abs(af.coeffs).max()
    assert scale > 0
    assert np.abs(af.coeffs - af.coeffs[::-1]).max() <= 1e-12 * scale
    assert np.abs(af.coeffs.imag).max() <= 1e-12 * scale


def test_angular_fourier_decay_bound():
    bi = co.bimaxwellian()
    af = harness.angular_fourier(bi, MAXWELL, np.array([0.25, 0.5]), (3, 2), 0.25, K=64)
    ks = af.ks.astype(float)
    assert np.all(np.abs(af.coeffs) * (1 + ks**2) <= af.c3_fit * (1 + 1e-12))
    # conjugate symmetry of a real integrand
    assert np.abs(af.coeffs - np.conj(af.coeffs[::-1])).max() <= 1e-14


# ---------------------------------------------------------------------------
# equid_term
# ---------------------------------------------------------------------------

def test_equid_term_m7_only_k4():
    x = int((3.0 / 0.1) ** 2)
    only4 = (2 * 0.1) ** 2 * float(circles.abs_S_closed_range(x, 4)[1:].sum())
    assert harness.equid_term(0.1, 3.0, 7) == pytest.approx(only4, rel=1e-15)


def test_equid_term_matches_brute_force():
    # R/h = 100, the largest size where direct point enumeration is cheap.
    h, R, M = 0.05, 5.0, 12
    fast = harness.equid_term(h, R, M)
    best = 0.0
    for k in (4, 8):
        tot = 0.0
        for n in range(1, int((R / h) ** 2) + 1):
            pts = circles.circle_points(n)
            if pts.count:
                tot += abs(np.exp(1j * k * pts.angles).sum())
        best = max(best, tot)
    assert fast == pytest.approx((2 * h) ** 2 * best, rel=1e-9)


def test_equid_term_decreases_as_h_halves():
    vals = [harness.equid_term(h, 3.0, 12) for h in (0.5, 0.25, 0.125)]
    assert vals[0] > vals[1] > vals[2]


def test_equid_term_precondition():
    with pytest.raises(PreconditionError):
        harness.equid_term(0.1, 3.0, 4)


# ---------------------------------------------------------------------------
# converge_study
# ---------------------------------------------------------------------------

def test_converge_study_rejects_non_decreasing_ladder():
    with pytest.raises(PreconditionError):
        harness.converge_study(co.Maxwellian(), MAXWELL, np.zeros(2), [0.25, 0.5], R=2.0)


def test_converge_study_zero_f():
    zero = lambda pts: np.zeros(np.asarray(pts).shape[:-1])
    study = harness.converge_study(zero, MAXWELL, np.zeros(2), [0.5, 0.25], R=2.0, M_diag=8)
    assert study.qref == 0.0
    for row in study.rows:
        assert row.qh == 0.0 and row.abs_err == 0.0
        assert row.budget.tail_R == 0.0
        assert row.budget.riemann_h == 0.0
        assert row.budget.fourier_tail_M == 0.0
        assert row.budget.equid == 0.0


def test_converge_study_bimaxwellian_budget():
    bi = co.bimaxwellian()
    study = harness.converge_study(
        bi, MAXWELL, np.zeros(2), [0.5, 0.25, 0.125], R=3.0, M_diag=16
    )
    errs = [row.abs_err for row in study.rows]
    assert errs[0] > errs[-1]
    riemanns = [row.budget.riemann_h for row in study.rows]
    for a, b in zip(riemanns, riemanns[1:]):
        assert 1.5 < a / b < 3.0  # first-order outer Riemann error
    for row in study.rows:
        b = row.budget
        assert b.tail_R >= 0 and b.riemann_h >= 0
        assert b.fourier_tail_M >= 0 and b.equid >= 0
        assert b.fitted["C3"] > 0


def test_tail_term_bounds_dropped_tail():
    """tail_R is the one rigorous bound: it dominates what truncating the
    w-integral at R actually drops."""
    bi = co.bimaxwellian()
    study = harness.converge_study(bi, MAXWELL, np.zeros(2), [0.5], R=3.0, M_diag=8)
    inner_only = co.q_reference(
        bi, np.zeros(2), MAXWELL, co.QuadratureConfig(r_quad=3.0, n_w=96, n_theta=96)
    )
    dropped = abs(study.qref - inner_only.value)
    assert dropped <= study.rows[0].budget.tail_R + 1e-10


def test_convergence_csv():
    bi = co.bimaxwellian()
    study = harness.converge_study(bi, MAXWELL, np.zeros(2), [0.5], R=2.0, M_diag=8)
    buf = io.StringIO()
    harness.write_convergence_csv(study, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0].startswith("h,Qh,Qref,abs_err")
    assert len(lines) == 2


# ---------------------------------------------------------------------------
# figure_data
# ---------------------------------------------------------------------------

def test_figure_query_validation():
    with pytest.raises(PreconditionError):
        harness.FigureQuery(5, 3, 72)
    with pytest.raises(PreconditionError):
        harness.FigureQuery(0, 100, 70)
    with pytest.raises(PreconditionError):
        harness.FigureQuery(0, 100, 72, "gte")
    with pytest.raises(PreconditionError):
        harness.FigureQuery(0, 30000, 72)


def test_figure_data_small_box_brute_force():
    data = harness.figure_data(harness.FigureQuery(1, 9, 8, "ge"))
    brute = sorted(
        (z1, z2)
        for z1 in range(1, 10)
        for z2 in range(1, 10)
        if circles.r2(z1 * z1 + z2 * z2) >= 8
    )
    assert sorted(map(tuple, data.points.tolist())) == brute
    for (x, y), n, r in zip(data.points.tolist(), data.n_values.tolist(), data.r_values.tolist()):
        assert x * x + y * y == n
        assert circles.r2(n) == r


def test_figure_data_gt_vs_ge():
    ge = harness.figure_data(harness.FigureQuery(1, 30, 8, "ge"))
    gt = harness.figure_data(harness.FigureQuery(1, 30, 8, "gt"))
    assert gt.count == int((ge.r_values > 8).sum())
    assert ge.count >= gt.count


def test_figure_data_deterministic():
    q = harness.FigureQuery(1, 50, 16, "ge")
    a = harness.figure_data(q)
    b = harness.figure_data(q)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.n_values, b.n_values)


def test_figure_csv():
    data = harness.figure_data(harness.FigureQuery(1, 9, 8, "ge"))
    buf = io.StringIO()
    harness.write_figure_csv(data, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "zeta1,zeta2,n,r2"
    assert len(lines) == 1 + data.count


# ---------------------------------------------------------------------------
# max_r_search
# ---------------------------------------------------------------------------

def exhaustive_max_r(radius_bound: int) -> tuple[int, int]:
    x = radius_bound * radius_bound
    counts = np.zeros(x + 1, dtype=np.int64)
    for a in range(-radius_bound, radius_bound + 1):
        rem = x - a * a
        b = math.isqrt(rem)
        bs = np.arange(-b, b + 1)
        np.add.at(counts, a * a + bs * bs, 1)
    n_best = int(np.argmax(counts))
    return n_best, int(counts[n_best])


def test_max_r_search_examples():
    assert harness.max_r_search(math.sqrt(5)) == (5, 8)
    assert harness.max_r_search(100) == exhaustive_max_r(100)
    assert harness.max_r_search(300) == exhaustive_max_r(300)


def test_max_r_search_full_bound():
    assert harness.max_r_search(20000) == (243061325, 384)


def test_max_r_search_precondition():
    with pytest.raises(PreconditionError):
        harness.max_r_search(30000)


# ---------------------------------------------------------------------------
# relax_simulate
# ---------------------------------------------------------------------------

def test_relax_maxwellian_stays_put():
    m = co.Maxwellian(1.0, 0.0, 0.0, 0.4)
    f0 = co.sample_on_lattice(m, 0.25, 4.0)
    traj = harness.relax_simulate(f0, MAXWELL, R=2.0, dt=0.01, steps=100, record_every=100)
    lo = traj[-1].f.bound - f0.bound
    sl = slice(lo, lo + 2 * f0.bound + 1)
    dev = np.abs(traj[-1].f.grid[sl, sl] - f0.grid).max()
    assert dev <= 1e-6 * f0.grid.max()


def test_relax_bimaxwellian_h_decreases_and_moments_hold():
    mix = co.MaxwellianMixture(
        (co.Maxwellian(0.5, 1.25, 0.0, 0.4), co.Maxwellian(0.5, -1.25, 0.0, 0.4))
    )
    f0 = co.sample_on_lattice(mix, 0.25, 5.0)
    traj = harness.relax_simulate(f0, MAXWELL, R=5.0, dt=1e-3, steps=20)
    hs = [s.H for s in traj]
    for a, b in zip(hs, hs[1:]):
        assert b - a <= 1e-10
    m0 = traj[0]
    for s in traj[1:]:
        assert abs(s.mass - m0.mass) <= 1e-8 * m0.mass
        assert abs(s.momentum[0] - m0.momentum[0]) <= 1e-8 * (abs(m0.momentum[0]) + m0.mass)
        assert abs(s.energy - m0.energy) <= 1e-8 * m0.energy


def test_relax_positivity_abort():
    mix = co.MaxwellianMixture(
        (co.Maxwellian(0.5, 1.25, 0.0, 0.4), co.Maxwellian(0.5, -1.25, 0.0, 0.4))
    )
    f0 = co.sample_on_lattice(mix, 0.25, 5.0)
    with pytest.raises(PositivityLossError):
        harness.relax_simulate(f0, MAXWELL, R=5.0, dt=50.0, steps=50)


def test_relax_csv():
    m = co.Maxwellian(1.0, 0.0, 0.0, 0.4)
    f0 = co.sample_on_lattice(m, 0.25, 2.0)
    traj = harness.relax_simulate(f0, MAXWELL, R=1.0, dt=0.01, steps=3)
    buf = io.StringIO()
    harness.write_relax_csv(traj, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "t,mass,momentum_x,momentum_y,energy,H"
    assert len(lines) == 1 + len(traj)


def test_relax_preconditions():
    f0 = co.sample_on_lattice(co.Maxwellian(), 0.5, 2.0)
    with pytest.raises(PreconditionError):
        harness.relax_simulate(f0, MAXWELL, R=1.0, dt=-0.1, steps=5)
    with pytest.raises(PreconditionError):
        harness.relax_simulate(f0, MAXWELL, R=1.0, dt=0.1, steps=0)
