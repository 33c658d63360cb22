import math

import numpy as np
import pytest

from sasaki_lab import geodesics as geo
from sasaki_lab import jacobi as jac
from sasaki_lab.models import model_from_name

NAMES = ("heisenberg3", "heisenberg5", "hopf3", "ads3")
H3 = model_from_name("heisenberg3")


def gdot_on(arc):
    return np.linalg.solve(jac._on_basis(arc.model.dim, arc.eps), arc.v0)


def random_arc(M, eps, rng, rmax=1.5):
    v = rng.normal(size=M.dim)
    return jac.unit_arc(M, eps, v, rng.uniform(0.3, rmax))


def field_to(arc, v):
    """Jacobi field with Y(0) = 0 and Y(r) = v (parallel components)."""
    fund = jac.fundamental_solution(arc, samples=3)
    _, U, _ = fund(arc.length)
    return jac.jacobi_propagate(arc, np.zeros(arc.model.dim), np.linalg.solve(U, v), samples=9)


# propagation -----------------------------------------------------------------------

def test_zero_data_gives_zero_field():
    arc = jac.unit_arc(H3, 0.5, [0.3, 0.2, 0.4], 1.2)
    sol = jac.jacobi_propagate(arc, np.zeros(3), np.zeros(3))
    assert np.max(np.abs(sol.Y)) == 0.0


@pytest.mark.parametrize("name", NAMES)
def test_radial_field(name, rng):
    M = model_from_name(name)
    arc = random_arc(M, 0.4, rng)
    gd = gdot_on(arc)
    sol = jac.jacobi_propagate(arc, np.zeros(M.dim), gd)
    assert np.max(np.abs(sol.Y[:, :, 0] - sol.t[:, None] * gd)) < 1e-9


@pytest.mark.parametrize("name", NAMES)
def test_residual_and_linearity(name, rng):
    M = model_from_name(name)
    d = M.dim
    arc = random_arc(M, 0.3, rng)
    Y0, dY0 = rng.normal(size=(2, d, 2))
    sol = jac.jacobi_propagate(arc, Y0, dY0)
    assert sol.residual <= 1e-8
    c = rng.normal(size=2)
    comb = jac.jacobi_propagate(arc, Y0 @ c, dY0 @ c)
    assert np.max(np.abs(comb.Y[:, :, 0] - sol.Y @ c)) < 1e-8


def test_parallel_frame_is_orthonormal(rng):
    M = model_from_name("hopf3")
    arc = random_arc(M, 0.5, rng)
    sol = jac.jacobi_propagate(arc, np.zeros(3), np.ones(3))
    G = jac.metric_eps(3, 0.5)
    for P in sol.frame:
        assert P.T @ G @ P == pytest.approx(np.eye(3), abs=1e-9)


# closed forms ----------------------------------------------------------------------

@pytest.mark.parametrize("eps", [0.25, 1.0])
def test_vertical_heisenberg_field_matches_ode(eps):
    arc = jac.unit_arc(H3, eps, [0, 0, 1], 4.0 * math.sqrt(eps))
    cf = jac.closed_form("C", arc, [0.6, 0.8, 0])
    assert jac.closed_form_vs_ode(cf, arc) < 1e-8


def _case_arc(M, case, eps, rng):
    if case == "B":
        a = rng.normal(size=M.n)
        return jac.unit_arc(M, eps, np.append(a, 0.0), rng.uniform(0.3, 1.2)), None
    if case == "C":
        v = np.zeros(M.dim)
        v[-1] = 1.0
        arc = jac.unit_arc(M, eps, v, rng.uniform(0.2, 1.9) * math.pi * math.sqrt(eps))
        v0 = np.append(rng.normal(size=M.n), 0.0)
        return arc, v0
    arc = jac.unit_arc(M, eps, rng.normal(size=M.dim), rng.uniform(0.3, 1.2))
    gd = gdot_on(arc)
    gh = gd.copy()
    gh[-1] = 0.0
    Jm = jac._j_matrix_on(M, eps)
    basis = np.linalg.qr(np.stack([gh, Jm @ gh], 1))[0]
    v0 = np.append(rng.normal(size=M.n), 0.0)
    v0 -= basis @ (basis.T @ v0)
    return arc, v0


@pytest.mark.parametrize("case,names", [("B", ("heisenberg3", "hopf3", "ads3")),
                                        ("C", ("heisenberg3", "hopf3", "ads3"))])
def test_closed_forms_match_ode(case, names, rng):
    for name in names:
        M = model_from_name(name)
        for _ in range(4):
            arc, v0 = _case_arc(M, case, float(rng.choice([0.25, 1.0])), rng)
            cf = jac.closed_form(case, arc, v0)
            assert jac.closed_form_vs_ode(cf, arc) <= 1e-6


@pytest.mark.parametrize("k", [0.0, 4.0, -4.0])
def test_case_a_matches_ode_with_supplied_curvature(k, rng):
    # case A needs n >= 4; the curved models' horizontal curvature is supplied on H^5
    M = model_from_name("heisenberg5")
    R = jac.constant_curvature_tensor(M, k)
    for _ in range(4):
        arc, v0 = _case_arc(M, "A", float(rng.choice([0.25, 1.0])), rng)
        cf = jac.closed_form("A", arc, v0, k=k)
        assert jac.closed_form_vs_ode(cf, arc, curvature=R) <= 1e-6


@pytest.mark.parametrize("case,name", [("A", "heisenberg5"), ("B", "hopf3"), ("C", "ads3")])
def test_closed_form_boundary_values(case, name, rng):
    M = model_from_name(name)
    arc, v0 = _case_arc(M, case, 0.5, rng)
    cf = jac.closed_form(case, arc, v0)
    Y0, _ = cf.evaluate(0.0)
    Yr, _ = cf.evaluate(arc.length)
    target = jac._j_matrix_on(M, 0.5) @ gdot_on(arc) if case == "B" else v0
    assert Y0 == pytest.approx(np.zeros(M.dim), abs=1e-12)
    assert Yr == pytest.approx(target, abs=1e-12)


@pytest.mark.parametrize("r,eps", [(0.5, 0.1), (1.7, 0.3), (3.0, 2.0)])
def test_case_b_flat_constant(r, eps):
    arc = jac.unit_arc(H3, eps, [1.0, 0.0, 0.0], r)
    cf = jac.closed_form("B", arc)
    assert cf.C_eps == pytest.approx(r ** 4 / 12 + eps * r * r, rel=1e-13)


def test_case_a_rejects_3d_and_bad_v0(rng):
    arc = jac.unit_arc(H3, 0.5, [0.3, 0.4, 0.2], 1.0)
    with pytest.raises(jac.WindowError):
        jac.closed_form("A", arc, [1.0, 0.0, 0.0])
    M = model_from_name("heisenberg5")
    arc = jac.unit_arc(M, 0.5, [1, 0, 0, 0, 0.2], 1.0)
    with pytest.raises(jac.WindowError):
        jac.closed_form("A", arc, [1.0, 0, 0, 0, 0])
    with pytest.raises(jac.WindowError):
        jac.closed_form("A", arc, [0, 1.0, 0, 0, 0.1])


def test_windows():
    S3 = model_from_name("hopf3")
    # sqrt(k1) r > pi with k1 = 4
    with pytest.raises(jac.WindowError):
        jac.closed_form("B", jac.unit_arc(S3, 0.5, [1, 0, 0], 1.7))
    with pytest.raises(jac.WindowError):
        jac.closed_form("C", jac.unit_arc(H3, 0.25, [0, 0, 1], 3.2), [1, 0, 0])
    with pytest.raises(jac.WindowError):
        jac.closed_form("B", jac.unit_arc(H3, 0.25, [1, 0, 1], 1.0))
    with pytest.raises(jac.WindowError):
        jac.closed_form("C", jac.unit_arc(H3, 0.25, [1, 0, 1], 1.0), [1, 0, 0])
    # nearly vertical: mu ~ -1/(4 eps) and sqrt(-mu) r = 10 > pi
    arc = jac.unit_arc(model_from_name("heisenberg5"), 0.01, [0.1, 0, 0, 0, 1.0], 2.0)
    with pytest.raises(jac.WindowError):
        jac.closed_form("A", arc, [0, 0, 1.0, 0, 0])


# index forms -----------------------------------------------------------------------

@pytest.mark.parametrize("name", NAMES)
def test_index_equals_boundary_term(name, rng):
    M = model_from_name(name)
    arc = random_arc(M, 0.5, rng, rmax=1.0)
    sol = jac.jacobi_propagate(arc, np.zeros(M.dim), rng.normal(size=M.dim), samples=5)
    I = jac.index_form(arc, jac.jacobi_field_fn(sol))
    _, Y, W = sol(arc.length)
    assert I == pytest.approx(Y[:, 0] @ W[:, 0], rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("name", NAMES)
def test_radial_trial_index(name, rng):
    # X = (t/r) g'_H: the J and curvature terms vanish, I = |g'_H|^2 / r
    M = model_from_name(name)
    arc = random_arc(M, float(rng.uniform(0.2, 2.0)), rng)
    gh = gdot_on(arc)
    gh[-1] = 0.0
    r = arc.length
    fn = lambda t: ((t / r)[:, None] * gh, np.broadcast_to(gh / r, (len(t), M.dim)))
    val, alt = jac.index_form(arc, fn, expanded=True)
    assert val == pytest.approx(arc.lam / r, rel=1e-10)


@pytest.mark.parametrize("eps", [0.25, 1.0])
def test_vertical_case_c_index(eps):
    r = 2.0 * math.sqrt(eps)
    arc = jac.unit_arc(H3, eps, [0, 0, 1], r)
    cf = jac.closed_form("C", arc, [1, 0, 0])
    I = jac.index_form(arc, cf.evaluate)
    q = 2.0 * math.sqrt(eps)
    assert I == pytest.approx(1.0 / (q * math.tan(r / q)), rel=1e-10)


@pytest.mark.parametrize("name", NAMES)
def test_expanded_horizontal_form_agrees(name, rng):
    M = model_from_name(name)
    arc = random_arc(M, 0.4, rng)
    c = np.append(rng.normal(size=(M.n, 2)), np.zeros((1, 2)), axis=0)
    fn = lambda t: (np.sin(t)[:, None] * c[:, 0] + (t * t)[:, None] * c[:, 1],
                    np.cos(t)[:, None] * c[:, 0] + (2 * t)[:, None] * c[:, 1])
    val, alt = jac.index_form(arc, fn, expanded=True)
    assert val == pytest.approx(alt, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("name", NAMES)
def test_index_lemma(name, rng):
    M = model_from_name(name)
    d = M.dim
    for _ in range(2):
        arc = random_arc(M, 0.5, rng, rmax=1.0)
        r = arc.length
        sol = field_to(arc, rng.normal(size=d))
        I_jac = jac.index_form(arc, jac.jacobi_field_fn(sol))
        base = jac.jacobi_field_fn(sol)
        ks = np.arange(1, 5)
        for _ in range(10):
            c = rng.normal(size=(4, d)) * 0.3
            def trial(t, c=c):
                Y, W = base(t)
                s = np.sin(np.outer(t, ks) * math.pi / r)
                ds = np.cos(np.outer(t, ks) * math.pi / r) * ks * math.pi / r
                return Y + s @ c, W + ds @ c
            assert I_jac <= jac.index_form(arc, trial) + 1e-9


def test_curvature_term_ignores_vertical_parts(rng):
    for name in NAMES:
        M = model_from_name(name)
        R = M.R_bott
        for _ in range(20):
            a, y = rng.normal(size=(2, M.dim))
            y2 = y.copy()
            y2[-1] += rng.normal()
            val = lambda u: np.einsum("i,j,l,ijlm,m->", a, u, u, R, a)
            assert abs(val(y) - val(y2)) <= 1e-12


# Hessian ---------------------------------------------------------------------------

def _target(M, eps, rng):
    a = rng.normal(size=M.n)
    p = rng.normal()
    a *= rng.uniform(0.4, 1.0) / np.linalg.norm(a)
    return geo.closed_exp(M, eps, M.backend.identity(), a, 0.5 * p, 1.0)


@pytest.mark.parametrize("name", NAMES)
def test_hessian_tangent_and_symmetry(name, rng):
    M = model_from_name(name)
    x = _target(M, 0.5, rng)
    H = jac.hessian_of_distance(M, 0.5, M.backend.identity(), x)
    a = H.arc.velocity_at(H.arc.length)
    assert abs(H(a)) < 1e-9
    assert H.asymmetry < 1e-8
    u, w = rng.normal(size=(2, M.dim))
    assert H(u, w) == pytest.approx(0.25 * (H(u + w) - H(u - w)), rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("name", NAMES)
def test_hessian_matches_finite_differences(name, rng):
    M = model_from_name(name)
    x0 = M.backend.identity()
    for _ in range(2):
        x = _target(M, 0.5, rng)
        H = jac.hessian_of_distance(M, 0.5, x0, x)
        v = rng.normal(size=M.dim)
        fd = jac.hessian_fd(M, 0.5, x0, x, v)
        assert H(v) == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_heisenberg_gradient_direction_bound(rng):
    for _ in range(10):
        eps = float(rng.choice([0.25, 1.0]))
        H = jac.hessian_of_distance(H3, eps, H3.backend.identity(), _target(H3, eps, rng))
        arc = H.arc
        a = arc.velocity_at(arc.length)
        lam = arc.lam
        grad_h = np.append(a[:-1], 0.0) / math.sqrt(lam)
        assert H(grad_h) <= min(lam, 1 - lam) / arc.length + 1e-9


def test_hessian_reports_conjugate_point():
    # vertical arc of length 2 pi sqrt(eps) ends at a conjugate point
    arc = jac.unit_arc(H3, 1.0, [0, 0, 1], 2 * math.pi)
    with pytest.raises(jac.ConjugatePointError):
        jac.hessian_from_arc(arc)


# conjugate points ------------------------------------------------------------------

@pytest.mark.parametrize("eps", [0.25, 1.0])
def test_vertical_conjugate_time(eps):
    arc = jac.unit_arc(H3, eps, [0, 0, 1], 8.0 * math.sqrt(eps))
    ts = jac.conjugate_locator(arc)
    assert ts[0] == pytest.approx(2 * math.pi * math.sqrt(eps), rel=1e-8)


def test_horizontal_line_has_no_conjugate_points():
    arc = jac.unit_arc(H3, 1.0, [1, 0, 0], 8.0)
    assert jac.conjugate_locator(arc) == []


def test_hopf_horizontal_first_zero():
    arc = jac.unit_arc(model_from_name("hopf3"), 1.0, [1, 0, 0], 4.0)
    ts = jac.conjugate_locator(arc)
    assert ts and ts[0] <= math.pi * 1.02
