import io
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dvm2d import circles
from dvm2d.errors import PreconditionError


def brute_force_points(n: int) -> set[tuple[int, int]]:
    """Scan |x| <= sqrt(n) for integer solutions of x^2 + y^2 = n."""
    out = set()
    for x in range(-math.isqrt(n), math.isqrt(n) + 1):
        y2 = n - x * x
        y = math.isqrt(y2)
        if y * y == y2:
            out.add((x, y))
            out.add((x, -y))
    return out


def test_r2_examples():
    assert circles.r2(1) == 4
    assert circles.r2(3) == 0
    assert circles.r2(25) == 12
    assert circles.r2(65) == 16


def test_r2_matches_brute_force():
    for n in range(1, 2001):
        assert circles.r2(n) == len(brute_force_points(n)), n


def test_circle_points_examples():
    assert set(circles.circle_points(2).points) == {(1, 1), (-1, 1), (1, -1), (-1, -1)}
    pts = circles.circle_points(25)
    assert pts.count == 12
    assert (3, 4) in pts.points and (5, 0) in pts.points
    big = circles.circle_points(243061325)
    assert big.count == 384
    assert all(x * x + y * y == 243061325 for x, y in big.points)


def test_circle_points_match_brute_force_small():
    for n in range(1, 3000):
        assert set(circles.circle_points(n).points) == brute_force_points(n), n


def brute_force_points_vectorized(n: int) -> set[tuple[int, int]]:
    """Same scan as brute_force_points, vectorized for large n."""
    xs = np.arange(math.isqrt(n) + 1, dtype=np.int64)
    y2 = n - xs * xs
    ys = np.rint(np.sqrt(y2.astype(np.float64))).astype(np.int64)
    hit = ys * ys == y2
    out = set()
    for x, y in zip(xs[hit].tolist(), ys[hit].tolist()):
        out.update({(x, y), (-x, y), (x, -y), (-x, -y)})
    return out


def test_circle_points_match_brute_force_smooth_large():
    """1000 random n <= 1e10 built from known smooth factorizations."""
    rng = random.Random(4242)
    small = [2, 3, 5, 7, 9, 13, 17, 25, 29, 37, 41, 49, 53, 61]
    for _ in range(1000):
        n = 1
        while True:
            f = rng.choice(small)
            if n * f > 10**10:
                break
            n *= f
        pts = circles.circle_points(n)
        assert set(pts.points) == brute_force_points_vectorized(n)
        assert pts.count == circles.r2(n)


def test_circle_points_eight_fold_symmetry():
    for n in (5, 25, 50, 325, 1105):
        pts = set(circles.circle_points(n).points)
        for x, y in pts:
            for sx, sy in ((x, y), (-x, y), (x, -y), (-x, -y)):
                assert (sx, sy) in pts
                assert (sy, sx) in pts


def test_circle_points_sorted_by_angle():
    pts = circles.circle_points(1105)
    assert np.all(np.diff(pts.angles) > 0)
    assert pts.angles[0] >= -math.pi and pts.angles[-1] < math.pi


def test_exp_sum_direct_examples():
    assert circles.exp_sum_direct(5, 0).value == pytest.approx(8)
    assert circles.exp_sum_direct(2, 4).value == pytest.approx(-4)
    # Eight points on the circle of 5; |S| = 8 |cos(4 theta_5)| = 56/25.
    assert abs(circles.exp_sum_direct(5, 4).value) == pytest.approx(56 / 25)


def test_exp_sum_direct_bounded_by_r2():
    for n in range(1, 500):
        r = circles.r2(n)
        for k in (0, 4, 8, 12):
            assert abs(circles.exp_sum_direct(n, k).value) <= r + 1e-9


def test_exp_sum_closed_examples():
    theta5 = math.atan(0.5)
    assert circles.exp_sum_closed(25, 4) == pytest.approx(
        4 * abs(1 + 2 * math.cos(8 * theta5))
    )
    assert circles.exp_sum_closed(25, 4) == pytest.approx(
        abs(circles.exp_sum_direct(25, 4).value)
    )
    for n in (5, 10, 25, 65, 130):
        assert circles.exp_sum_closed(n, 2) == 0.0
    for t in range(1, 11):
        assert circles.exp_sum_closed(2**t, 4) == pytest.approx(4.0)
        assert abs(circles.exp_sum_direct(2**t, 4).value) == pytest.approx(4.0)


def test_exp_sum_closed_vs_direct():
    """Closed form vs direct sum, every n <= 1e4 and k in 4..64."""
    k_values = list(range(4, 65, 4))
    closed = {k: circles.abs_S_closed_range(10**4, k) for k in k_values}
    for n in range(1, 10**4 + 1):
        pts = circles.circle_points(n)
        if pts.count == 0:
            for k in k_values:
                assert closed[k][n] == 0.0
            continue
        for k in k_values:
            d = abs(np.exp(1j * k * pts.angles).sum())
            c = closed[k][n]
            assert abs(d - c) <= 1e-9 * max(1.0, d, c), (n, k)


def test_exp_sum_vanishes_unless_4_divides_k():
    for n in range(1, 800):
        r = circles.r2(n)
        for k in (1, 2, 3, 5, 6, 7):
            assert circles.exp_sum_closed(n, k) == 0.0
            assert abs(circles.exp_sum_direct(n, k).value) <= 1e-9 * max(1, r)


@settings(max_examples=150, deadline=None)
@given(
    st.integers(min_value=1, max_value=50000),
    st.integers(min_value=1, max_value=16),
)
def test_exp_sum_closed_vs_direct_property(n, k4):
    k = 4 * k4
    d = abs(circles.exp_sum_direct(n, k).value)
    c = circles.exp_sum_closed(n, k)
    assert abs(d - c) <= 1e-9 * max(1.0, d, c)


def test_multiplicativity_of_abs_S_over_4():
    rng = random.Random(1905)
    checked = 0
    while checked < 200:
        m = rng.randrange(2, 3000)
        n = rng.randrange(2, 3000)
        if math.gcd(m, n) != 1:
            continue
        if circles.r2(m) == 0 or circles.r2(n) == 0:
            continue
        checked += 1
        for k in (4, 8):
            lhs = circles.exp_sum_closed(m * n, k) / 4
            rhs = (circles.exp_sum_closed(m, k) / 4) * (circles.exp_sum_closed(n, k) / 4)
            assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(lhs), abs(rhs)), (m, n, k)


def test_abs_S_invariant_under_angle_origin():
    """atan2(y, x) vs atan2(x, y) conventions give the same |S|."""
    for n in (5, 25, 65, 325, 1105, 4225):
        pts = circles.circle_points(n)
        for k in (4, 8, 12):
            s_standard = abs(np.exp(1j * k * pts.angles).sum())
            swapped = np.arctan2(pts.xs, pts.ys)
            s_swapped = abs(np.exp(1j * k * swapped).sum())
            assert s_standard == pytest.approx(s_swapped, abs=1e-9)


def test_avg_abs_S_flags_bad_k():
    stats = circles.avg_abs_S(10**4, 2)
    assert stats.vanishing_k
    assert stats.mean_abs_S == 0.0


def test_avg_abs_S_matches_direct_mean():
    X = 400
    stats = circles.avg_abs_S(X, 4)
    direct = math.fsum(abs(circles.exp_sum_direct(m, 4).value) for m in range(1, X + 1))
    assert stats.mean_abs_S == pytest.approx(direct / X, rel=1e-9)


def test_avg_abs_S_decays_between_decades():
    stats = circles.avg_abs_S(10**4, 4)
    means = [m for _, m in stats.decades]
    assert means[-1] < means[0]


def test_avg_abs_S_worker_partition_is_stable():
    # Bit-stable for a fixed worker count; only close across counts.
    b1 = circles.avg_abs_S(2000, 4, workers=4)
    b2 = circles.avg_abs_S(2000, 4, workers=4)
    assert b1 == b2
    a = circles.avg_abs_S(2000, 4, workers=1)
    assert a.mean_abs_S == pytest.approx(b1.mean_abs_S, rel=1e-12)


def test_prime_angle_sum_examples():
    # Only p = 5 contributes below 10: |cos(4 theta_5)| / 5 = (7/25)/5.
    assert circles.prime_angle_sum(10, 4) == pytest.approx(7 / 125)
    # Independent oracle below 100: brute-force splittings.
    expected = 0.0
    for p in (5, 13, 17, 29, 37, 41, 53, 61, 73, 89, 97):
        for y in range(1, math.isqrt(p) + 1):
            x2 = p - y * y
            x = math.isqrt(x2)
            if x * x == x2 and x > y:
                expected += abs(math.cos(4 * math.atan2(y, x))) / p
    assert circles.prime_angle_sum(100, 4) == pytest.approx(expected, rel=1e-12)


def test_prime_angle_sum_bound_shape():
    """Growth between decades is at most the (1/pi) loglog x slope."""
    v4 = circles.prime_angle_sum(10**4, 4)
    v6 = circles.prime_angle_sum(10**6, 4)
    assert v6 > v4
    slope_cap = (1 / math.pi) * (math.log(math.log(10**6)) - math.log(math.log(10**4)))
    assert v6 - v4 <= slope_cap + 0.05


def test_mertens_check():
    assert abs(circles.mertens_check(10**6) - 1) <= 0.05
    assert abs(circles.mertens_check(10**3) - 1) <= 0.15
    assert circles.mertens_check(10) > 0


def grid_scan_star_discrepancy(folded: np.ndarray, grid: int = 20000) -> float:
    ts = np.linspace(0.0, 1.0, grid + 1)
    emp = np.searchsorted(np.sort(folded), ts, side="left") / len(folded)
    return float(np.max(np.abs(emp - ts)))


def test_angular_discrepancy_examples():
    assert circles.angular_discrepancy(1) == pytest.approx(1.0)
    assert circles.angular_discrepancy(5) == pytest.approx(2 * math.atan(0.5) / math.pi)
    assert circles.angular_discrepancy(243061325) < 0.05


@pytest.mark.parametrize("n", [1, 2, 5, 25, 325, 1105, 243061325])
def test_angular_discrepancy_matches_grid_scan(n):
    pts = circles.circle_points(n)
    folded = np.mod(pts.angles, circles.QUARTER_TURN) / circles.QUARTER_TURN
    approx = grid_scan_star_discrepancy(folded)
    exact = circles.angular_discrepancy(n)
    assert exact >= approx - 1e-12
    assert exact - approx <= 2e-4


def test_landau_count_examples():
    assert circles.landau_count(2) == 2
    # Brute-force oracle for small x.
    for x in (10, 50, 200):
        expected = sum(1 for n in range(1, x + 1) if brute_force_points(n))
        assert circles.landau_count(x) == expected
    assert circles.landau_count(10) == 7


def test_landau_count_ratio_stability():
    c5 = circles.landau_count(10**5)
    c6 = circles.landau_count(10**6)
    r5 = c5 / (10**5 / math.sqrt(math.log(10**5)))
    r6 = c6 / (10**6 / math.sqrt(math.log(10**6)))
    assert abs(r5 / r6 - 1) <= 0.05


def test_preconditions_raise():
    with pytest.raises(PreconditionError):
        circles.r2(0)
    with pytest.raises(PreconditionError):
        circles.circle_points(0)
    with pytest.raises(PreconditionError):
        circles.avg_abs_S(50, 4)
    with pytest.raises(PreconditionError):
        circles.angular_discrepancy(3)
    with pytest.raises(PreconditionError):
        circles.prime_angle_sum(100, 3)


def test_circle_csv_roundtrip():
    pts = circles.circle_points(25)
    buf = io.StringIO()
    circles.write_circle_csv(pts, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "n,x,y,theta"
    assert len(lines) == 1 + pts.count
    rows = [line.split(",") for line in lines[1:]]
    parsed = {(int(r[1]), int(r[2])) for r in rows}
    assert parsed == set(pts.points)
    for r in rows:
        assert int(r[1]) ** 2 + int(r[2]) ** 2 == 25
        assert abs(float(r[3]) - math.atan2(int(r[2]), int(r[1]))) < 1e-15


def test_angle_stats_csv():
    stats = circles.avg_abs_S(1000, 4)
    buf = io.StringIO()
    circles.write_angle_stats_csv(stats, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "X,k,mean_abs_S"
    assert len(lines) == 1 + len(stats.decades)
    last = lines[-1].split(",")
    assert int(last[0]) == 1000
    assert float(last[2]) == pytest.approx(stats.mean_abs_S)
