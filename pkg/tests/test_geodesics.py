import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sasaki_lab import geodesics as geo
from sasaki_lab.models import model_from_name

H3 = model_from_name("heisenberg3")
NAMES = ("heisenberg3", "heisenberg5", "hopf3", "ads3")


def chart(M, x):
    return M.backend.from_chart(np.asarray(x, float))


@pytest.mark.parametrize("eps", [0.05, 1.0, 4.0])
def test_x_axis_is_a_geodesic(eps):
    arc = geo.exp_eps(H3, eps, H3.backend.identity(), [1.0, 0, 0], 2.0, samples=8)
    pts = H3.backend.to_chart(arc.points)
    assert pts[:, 1:] == pytest.approx(np.zeros((9, 2)), abs=1e-12)
    assert pts[:, 0] == pytest.approx(np.linspace(0, 2, 9), abs=1e-10)


@pytest.mark.parametrize("name", NAMES)
def test_vertical_arc_stays_in_leaf(name):
    M = model_from_name(name)
    v = np.zeros(M.dim)
    v[-1] = 0.5
    arc = geo.exp_eps(M, 0.5, M.backend.identity(), v, 1.5, samples=9)
    pts = M.backend.to_chart(arc.points)
    assert np.max(np.abs(pts[:, :-1])) < 1e-12


@pytest.mark.parametrize("name", NAMES)
@pytest.mark.parametrize("eps", [0.02, 0.3, 2.0])
def test_rk_matches_closed_form(name, eps, rng):
    M = model_from_name(name)
    x0 = M.backend.identity()
    for _ in range(3):
        v = rng.normal(size=M.dim)
        arc = geo.exp_eps(M, eps, x0, v, 1.0, samples=5)
        a0 = v[:-1]
        p = v[-1] / eps
        closed = geo.closed_exp(M, eps, x0, a0, p, np.linspace(0, 1, 6))
        assert np.max(np.abs(arc.points - closed)) < 1e-8


@pytest.mark.parametrize("name", NAMES)
@pytest.mark.parametrize("eps", [1e-5, 0.01, 0.25, 1.0, 8.0])
def test_conservation(name, eps, rng):
    M = model_from_name(name)
    for _ in range(4):
        # O(1) vertical momentum p = b/eps
        v = rng.normal(size=M.dim)
        v[-1] *= eps
        arc = geo.exp_eps(M, eps, M.backend.identity(), v, 2.0)
        assert arc.diagnostics["drift_speed"] <= 1e-9
        assert arc.diagnostics["drift_p_gscaled"] <= 1e-9
        # lambda + eps * (vertical part)^2 = 1 for the unit-speed velocity
        vel = arc.velocities
        assert vel[:, :-1].__pow__(2).sum(1) + vel[:, -1] ** 2 / eps == pytest.approx(
            np.ones(len(vel)), abs=1e-9)


def test_sr_zero_charge_is_straight():
    u0 = np.array([math.cos(0.4), math.sin(0.4)])
    arc = geo.sr_exp(H3, H3.backend.identity(), u0, 0.0, 1.5, samples=7)
    pts = H3.backend.to_chart(arc.points)
    s = np.linspace(0, 1.5, 8)
    assert pts[:, :2] == pytest.approx(np.outer(s, u0), abs=1e-10)
    assert pts[:, 2] == pytest.approx(np.zeros(8), abs=1e-12)


@pytest.mark.parametrize("c", [0.7, -2.0])
def test_sr_circle_radius(c):
    u0 = np.array([1.0, 0.0])
    arc = geo.sr_exp(H3, H3.backend.identity(), u0, c, 2.5, samples=40)
    xy = H3.backend.to_chart(arc.points)[:, :2]
    # the circle through 0 with tangent u0 has its centre on the normal line
    for sign in (1, -1):
        centre = np.array([0.0, sign / abs(c)])
        d = np.linalg.norm(xy - centre, axis=1)
        if np.allclose(d, 1 / abs(c), atol=1e-8):
            break
    else:
        pytest.fail("horizontal projection is not a circle of radius 1/|c|")


def test_sr_sign_consistency():
    for name in ("heisenberg3", "hopf3", "ads3"):
        res = geo.sr_sign_consistency(model_from_name(name))
        assert res["agrees"] and res["matches_model"]


def test_sr_exp_requires_unit_horizontal():
    with pytest.raises(ValueError):
        geo.sr_exp(H3, H3.backend.identity(), [2.0, 0.0], 1.0)


@pytest.mark.parametrize("eps", [0.0, 0.01, 0.3, 1.0, 5.0])
def test_unit_horizontal_distance(eps):
    x1 = chart(H3, [1, 0, 0])
    assert geo.distance(H3, eps, H3.backend.identity(), x1).length == pytest.approx(1.0, abs=1e-9)


def test_bvp_rejects_equal_points():
    with pytest.raises(ValueError):
        geo.solve_bvp(H3, 1.0, H3.backend.identity(), H3.backend.identity())


@pytest.mark.parametrize("z", [0.3, 1.0, 5.0])
def test_vertical_point_eps1(z):
    arc = geo.solve_bvp(H3, 1.0, H3.backend.identity(), chart(H3, [0, 0, z]))
    assert arc.length == pytest.approx(geo.heisenberg_oracle_distance(1.0, [0, 0, z]), rel=1e-9)


@pytest.mark.parametrize("h", [0.2, 1.0, 3.0])
def test_sr_vertical_distance(h):
    # isoperimetric oracle: a horizontal loop of length L encloses area L^2/(4 pi) = h
    res = geo.distance(H3, 0.0, H3.backend.identity(), chart(H3, [0, 0, h]))
    assert res.length == pytest.approx(math.sqrt(4 * math.pi * h), rel=1e-6)


def test_oracle_equivalence(rng):
    x0 = H3.backend.identity()
    for i in range(50):
        x = rng.uniform(-1.5, 1.5, 3)
        eps = [0.05, 0.25, 1.0, 3.0][i % 4]
        arc = geo.solve_bvp(H3, eps, x0, chart(H3, x))
        assert arc.length == pytest.approx(geo.heisenberg_oracle_distance(eps, x), rel=1e-6)


@pytest.mark.parametrize("name", NAMES)
def test_triangle_inequality(name, rng):
    M = model_from_name(name)
    eps = 0.5
    count = 200 if name == "heisenberg3" else 30
    for _ in range(count):
        a, b, c = (chart(M, p) for p in rng.uniform(-0.6, 0.6, (3, M.dim)))
        d = lambda p, q: geo.solve_bvp(M, eps, p, q).length
        assert d(a, c) <= d(a, b) + d(b, c) + 1e-7


@pytest.mark.parametrize("name", NAMES)
def test_monotone_in_eps(name, rng):
    M = model_from_name(name)
    x0 = M.backend.identity()
    count = 100 if name == "heisenberg3" else 20
    for _ in range(count):
        x = chart(M, rng.uniform(-0.8, 0.8, M.dim))
        e1, e2 = sorted(rng.uniform(0.02, 2.0, 2), reverse=True)
        assert geo.solve_bvp(M, e1, x0, x).length <= geo.solve_bvp(M, e2, x0, x).length + 1e-9


def test_sr_continuation_agrees_with_shooting(rng):
    for _ in range(5):
        y = rng.uniform(-1, 1, 3)
        res = geo.distance(H3, 0.0, H3.backend.identity(), chart(H3, y))
        assert abs(res.diagnostics["sr_minus_richardson"]) < 1e-8 * res.length
        assert res.length == pytest.approx(geo.heisenberg_oracle_distance(0.0, y), rel=1e-8)


def test_lengths_nondecreasing_in_continuation(rng):
    x = chart(H3, [0.4, -0.2, 0.6])
    res = geo.distance(H3, 0.0, H3.backend.identity(), x)
    assert np.all(np.diff(res.diagnostics["lengths"]) >= -1e-12)


def test_richardson_exact_on_polynomials():
    eps = 4.0 ** -np.arange(4)
    vals = 2.0 + 3 * eps - eps ** 2 + 0.5 * eps ** 3
    assert geo.richardson(vals, 4.0)[-1][-1] == pytest.approx(2.0, abs=1e-13)


def test_csv_rows_layout():
    arc = geo.exp_eps(H3, 0.5, H3.backend.identity(), [1.0, 0.2, 0.1], 1.0, samples=3)
    rows = list(arc.csv_rows())
    assert len(rows[0]) == 1 + 3 + 3 + 2
    assert rows[-1][0] == pytest.approx(arc.length)


@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(0.05, 2.0))
def test_lipschitz_in_x(x, y, z, eps):
    if abs(x) + abs(y) + abs(z) < 1e-3:
        return
    L = geo.solve_bvp(H3, eps, H3.backend.identity(), chart(H3, [x, y, z])).length
    assert L >= math.hypot(x, y) - 1e-9
