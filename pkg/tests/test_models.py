import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from sasaki_lab import models as mo

NAMES = ("heisenberg3", "heisenberg5", "hopf3", "ads3")


def frame_ricci(M, eps):
    R = mo.lc_curvature_expansion(M, eps)
    G = mo.metric_eps(M.dim, eps)
    B = np.eye(M.dim)
    B[-1, -1] = math.sqrt(eps)
    return sum(np.einsum("i,ijkl,lm,m->jk", ea, R, G, ea) for ea in B)


def test_build_rejects_bad_input():
    with pytest.raises(mo.ModelError):
        mo.build_model("Heisenberg", 3)
    with pytest.raises(mo.ModelError):
        mo.model_from_name("torus3")


def test_heisenberg_frame():
    M = mo.model_from_name("heisenberg3")
    x = np.array([0.3, -0.7, 0.2])
    Cf = M.backend.coframe(x)
    F = np.linalg.inv(Cf)  # rows: frame vectors in chart components
    # X = d_x + (y/2) d_z, Y = d_y - (x/2) d_z, so that T(X, Y) = -[X, Y] = S
    assert F[0] == pytest.approx([1, 0, -0.35])
    assert F[1] == pytest.approx([0, 1, -0.15])
    assert F[2] == pytest.approx([0, 0, 1])
    assert M.k1 == 0.0
    assert np.all(M.R_bott == 0)


def test_measured_curvatures(models):
    assert models["hopf3"].k1 == pytest.approx(4.0, abs=1e-12)
    assert models["ads3"].k1 == pytest.approx(-4.0, abs=1e-12)
    assert models["heisenberg5"].k2 == 0.0
    assert math.isnan(models["hopf3"].k2)


@pytest.mark.parametrize("name", NAMES)
def test_j_and_torsion(models, name):
    M = models[name]
    m = M.n // 2
    e = np.eye(M.dim)
    for i in range(m):
        assert mo.j_apply(M, e[i]).coeffs == pytest.approx(e[m + i])
        assert mo.j_apply(M, mo.j_apply(M, e[i])).coeffs == pytest.approx(-e[i])
        assert mo.torsion(M, e[i], e[m + i]).coeffs == pytest.approx(e[-1])
    assert mo.j_apply(M, e[-1]).coeffs == pytest.approx(np.zeros(M.dim))
    for v in e:
        assert mo.torsion(M, e[-1], v).coeffs == pytest.approx(np.zeros(M.dim))


def test_torsion_orthogonal_pair(models):
    M = models["heisenberg5"]
    e = np.eye(5)
    assert mo.torsion(M, e[0], e[1]).coeffs == pytest.approx(np.zeros(5))


def test_mismatched_base_points(models):
    M = models["heisenberg3"]
    u = mo.FrameVector(np.array([1.0, 0, 0]), np.zeros(3))
    v = mo.FrameVector(np.array([0, 1.0, 0]), np.ones(3))
    with pytest.raises(mo.ModelError):
        mo.torsion(M, u, v)


def test_metric_eps():
    assert mo.inner_eps([1, 2, 3], [4, 5, 6], 0.5) == pytest.approx(4 + 10 + 36)


@pytest.mark.parametrize("name", ["hopf3", "ads3", "heisenberg5"])
def test_constant_curvature_law(models, name, rng):
    M = models[name]
    e = np.eye(M.dim)
    for _ in range(100):
        v = np.append(rng.normal(size=M.n), rng.normal())
        w = np.append(rng.normal(size=M.n), rng.normal())
        sec = mo.curvature_bott(M, None, v, w, w).coeffs[:-1] @ v[:-1]
        vh, wh = v[:-1], w[:-1]
        area = (vh @ vh) * (wh @ wh) - (vh @ wh) ** 2
        Jv = mo.j_apply(M, v).coeffs[:-1]
        cj = (Jv @ wh) ** 2  # squared J-component of the plane
        k2 = 0.0 if math.isnan(M.k2) else M.k2
        # k1 on the J-plane part, k2 on the J-orthogonal part (n = 2 has none)
        expected = M.k1 * cj + k2 * (area - cj) if M.n > 2 else M.k1 * area
        if M.n == 2:
            assert sec == pytest.approx(expected, abs=1e-10 * (1 + abs(expected)))
        else:
            assert sec == pytest.approx(expected, abs=1e-10)
    X = e[0]
    JX = mo.j_apply(M, X).coeffs
    assert mo.curvature_bott(M, None, X, JX, JX).coeffs @ X == pytest.approx(M.k1)


@pytest.mark.parametrize("name", NAMES)
def test_bott_curvature_ignores_vertical_parts(models, name, rng):
    M = models[name]
    for _ in range(100):
        u, v = rng.normal(size=(2, M.dim))
        uh, vh = u.copy(), v.copy()
        uh[-1] = vh[-1] = 0
        a = mo.curvature_bott(M, None, u, v, v).coeffs[:-1] @ u[:-1]
        b = mo.curvature_bott(M, None, uh, vh, vh).coeffs[:-1] @ uh[:-1]
        assert a == pytest.approx(b, abs=1e-10)


def test_adjoint_curvature_heisenberg(models, rng):
    M = models["heisenberg3"]
    eps = 0.37
    for _ in range(10):
        u, v, w = rng.normal(size=(3, 3))
        u[-1] = v[-1] = w[-1] = 0
        got = mo.curvature_adjoint(M, eps, None, u, v, w).coeffs
        Ju = mo.j_apply(M, u).coeffs
        Jw = mo.j_apply(M, w).coeffs
        assert got == pytest.approx((Ju @ v) / eps * Jw, abs=1e-12)
        assert mo.curvature_adjoint(M, eps, None, u, u, w).coeffs == pytest.approx(np.zeros(3), abs=1e-14)
        assert mo.curvature_adjoint(M, eps, None, u, v, [0, 0, 1.0]).coeffs == pytest.approx(np.zeros(3), abs=1e-14)
    with pytest.raises(ValueError):
        mo.curvature_adjoint(M, 0.0, None, u, v, w)


@pytest.mark.parametrize("name", NAMES)
def test_adjoint_matches_simplified(models, name, rng):
    M = models[name]
    for eps in (0.2, 1.5):
        for _ in range(10):
            u, v, w = rng.normal(size=(3, M.dim))
            a = mo.curvature_adjoint(M, eps, None, u, v, w).coeffs
            b = mo.curvature_adjoint_simplified(M, eps, u, v, w)
            assert a == pytest.approx(b, abs=1e-11)


def test_ricci_examples(models):
    M = models["heisenberg3"]
    for eps in (0.1, 0.3, 1.0):
        assert mo.ricci_eps(M, eps, None, [1.0, 0, 0]) == pytest.approx(-1 / (2 * eps), rel=1e-12)
        assert mo.ricci_eps(M, eps, None, [0, 0, 1.0]) == pytest.approx(2 / (4 * eps ** 2), rel=1e-12)
        ric = frame_ricci(M, eps)
        assert ric[0, 2] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("name", NAMES)
@pytest.mark.parametrize("eps", [0.1, 1.0])
def test_ricci_closed_forms(models, name, eps, rng):
    M = models[name]
    ric = frame_ricci(M, eps)
    for _ in range(10):
        u = rng.normal(size=M.dim)
        assert u @ ric @ u == pytest.approx(mo.ricci_closed_form(M, eps, u), rel=1e-10, abs=1e-10)
    X = np.append(rng.normal(size=M.n), 0.0)
    Z = np.zeros(M.dim)
    Z[-1] = 1.0
    assert X @ ric @ Z == pytest.approx(mo.ricci_mixed_closed_form(M, eps, X, Z), abs=1e-10)


@pytest.mark.parametrize("name", NAMES)
def test_levicivita_against_finite_differences(models, name, rng):
    M = models[name]
    eps = 0.5
    R = mo.lc_curvature_expansion(M, eps)
    for x in mo.sample_chart_points(M, 3, rng):
        Rc = mo.chart_curvature_fd(M, eps, x)
        Rf = mo.frame_curvature_in_chart(M, R, x)
        assert np.max(np.abs(Rc - Rf)) < 1e-6 * (1 + np.max(np.abs(Rf)))


@pytest.mark.parametrize("name", NAMES)
def test_yang_mills(models, name):
    assert np.all(mo.yang_mills_divergence(models[name]) == 0)


@pytest.mark.parametrize("name", NAMES)
def test_descriptor_json(models, name):
    M = models[name]
    doc = json.loads(M.to_json())
    assert doc["format_version"] == mo.FORMAT_VERSION
    assert doc["n"] == M.n
    assert doc["sr_sign"] == M.sigma


@given(arrays(float, 3, elements=st.floats(-2, 2)), arrays(float, 3, elements=st.floats(-2, 2)),
       st.floats(0.05, 5))
def test_metric_is_gh_plus_gv_over_eps(a, b, eps):
    G = mo.metric_eps(3, eps)
    assert a @ G @ b == pytest.approx(a[:2] @ b[:2] + a[2] * b[2] / eps, abs=1e-9)
