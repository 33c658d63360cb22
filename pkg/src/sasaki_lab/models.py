"""Sasakian model spaces and their frame geometry.

A model is described by the structure constants ``c[i, j, k]`` of its
left-invariant adapted frame ``{X_1..X_m, Y_1..Y_m, S}`` (``[E_i, E_j] =
c[i, j, k] E_k``).  Because the frame is left-invariant and orthonormal for
``g``, every connection used here has constant coefficients
``Gamma[i, j, k]`` (``nabla_{E_i} E_j = Gamma[i, j, k] E_k``) and all
curvature tensors follow algebraically.

The metric ``g_eps`` is ``diag(1, ..., 1, 1/eps)`` in this frame.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from .groups import Backend, make_backend

FORMAT_VERSION = 1


class ModelKind(str, Enum):
    HEISENBERG = "Heisenberg"
    HOPF = "HopfSphere"
    ADS = "AntiDeSitter"


_KIND_ALIASES = {
    "heisenberg": ModelKind.HEISENBERG,
    "hopfsphere": ModelKind.HOPF,
    "hopf": ModelKind.HOPF,
    "antidesitter": ModelKind.ADS,
    "ads": ModelKind.ADS,
}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class FrameVector:
    """Tangent vector given by adapted-frame coefficients at a chart point."""

    coeffs: np.ndarray
    base: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        if self.base is not None:
            object.__setattr__(self, "base", np.asarray(self.base, dtype=float))

    @property
    def horizontal(self) -> np.ndarray:
        return self.coeffs[:-1]

    @property
    def vertical(self) -> float:
        return float(self.coeffs[-1])


def _coeffs(v, base=None):
    if isinstance(v, FrameVector):
        if base is not None and v.base is not None and not np.allclose(v.base, base, atol=1e-12):
            raise ModelError("vectors live at different base points")
        return v.coeffs
    return np.asarray(v, dtype=float)


def _common_base(*vs):
    base = None
    for v in vs:
        if isinstance(v, FrameVector) and v.base is not None:
            if base is None:
                base = v.base
            elif not np.allclose(base, v.base, atol=1e-12):
                raise ModelError("vectors live at different base points")
    return base


def metric_eps(dim: int, eps: float) -> np.ndarray:
    """Gram matrix of ``g_eps`` in the adapted frame."""
    if eps <= 0:
        raise ModelError("eps must be positive")
    G = np.eye(dim)
    G[-1, -1] = 1.0 / eps
    return G


def inner_eps(u, v, eps: float) -> float:
    """``g_eps(u, v) = <u_H, v_H> + u_V v_V / eps``."""
    u = np.asarray(u)
    v = np.asarray(v)
    return float(np.dot(u[..., :-1], v[..., :-1]) + u[..., -1] * v[..., -1] / eps)


# frame tensor algebra -----------------------------------------------------------

def levi_civita_coefficients(c: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Koszul formula for a left-invariant metric with constant Gram matrix ``G``."""
    C = np.einsum("ijk,kl->ijl", c, G)
    L = 0.5 * (C - np.einsum("jli->ijl", C) + np.einsum("lij->ijl", C))
    return np.einsum("ijl,lk->ijk", L, np.linalg.inv(G))


def curvature_from_coefficients(Gam: np.ndarray, c: np.ndarray) -> np.ndarray:
    """``R[i, j, k, m]``: component ``m`` of ``R(E_i, E_j) E_k`` for constant coefficients."""
    return (np.einsum("jkl,ilm->ijkm", Gam, Gam)
            - np.einsum("ikl,jlm->ijkm", Gam, Gam)
            - np.einsum("ijl,lkm->ijkm", c, Gam))


def torsion_from_coefficients(Gam: np.ndarray, c: np.ndarray) -> np.ndarray:
    return Gam - np.swapaxes(Gam, 0, 1) - c


def covariant_derivative_12(A: np.ndarray, Gam: np.ndarray) -> np.ndarray:
    """``D[i, j, k, m]``: component ``m`` of ``(nabla_{E_i} A)(E_j, E_k)``."""
    return (np.einsum("jkl,ilm->ijkm", A, Gam)
            - np.einsum("ijl,lkm->ijkm", Gam, A)
            - np.einsum("ikl,jlm->ijkm", Gam, A))


def bott_coefficients(c: np.ndarray, n: int) -> np.ndarray:
    """Bott connection coefficients by projection of the ``g`` Levi-Civita connection."""
    d = c.shape[0]
    lc = levi_civita_coefficients(c, np.eye(d))
    H = np.zeros(d, dtype=bool)
    H[:n] = True
    V = ~H
    Gam = np.zeros_like(lc)
    for i in range(d):
        for j in range(d):
            if H[i] and H[j]:
                Gam[i, j, H] = lc[i, j, H]
            elif V[i] and H[j]:
                Gam[i, j, H] = c[i, j, H]
            elif H[i] and V[j]:
                Gam[i, j, V] = c[i, j, V]
            else:
                Gam[i, j, V] = lc[i, j, V]
    return Gam


# model -----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModelSpace:
    """A Sasakian model with its adapted frame geometry.

    Attributes
    ----------
    kind : ModelKind
    n : int
        Horizontal dimension (even).
    m : int
        Vertical dimension, always 1.
    c : ndarray
        Structure constants ``c[i, j, k]``.
    k1, k2 : float
        Pseudo-Hermitian sectional curvature and J-orthogonal curvature of
        the Bott connection, measured from the curvature tensor.  ``k2`` is
        ``nan`` when ``n = 2`` (no J-orthogonal horizontal plane).
    sigma : int
        Sign in the sub-Riemannian geodesic equation
        ``nabla_{g'} g' = sigma * c * J g'`` with ``c`` the vertical momentum.
    """

    kind: ModelKind
    n: int
    c: np.ndarray
    gamma_bott: np.ndarray
    T: np.ndarray
    Jt: np.ndarray
    R_bott: np.ndarray
    k1: float
    k2: float
    delta: float
    sigma: int
    backend: Backend = field(repr=False)
    m: int = 1

    @property
    def dim(self) -> int:
        return self.n + 1

    @property
    def name(self) -> str:
        short = {ModelKind.HEISENBERG: "heisenberg", ModelKind.HOPF: "hopf",
                 ModelKind.ADS: "ads"}[self.kind]
        return f"{short}{self.dim}"

    # connections -----------------------------------------------------------
    def gamma_eps(self, eps: float) -> np.ndarray:
        """``nabla^eps_X Y = nabla_X Y - T(X, Y) + (1/eps) J_Y X``."""
        _check_eps(eps)
        return self.gamma_bott - self.T + np.einsum("jik->ijk", self.Jt) / eps

    def gamma_hat(self, eps: float) -> np.ndarray:
        """``hat nabla^eps_X Y = nabla_X Y + (1/eps) J_X Y``."""
        _check_eps(eps)
        return self.gamma_bott + self.Jt / eps

    def gamma_lc(self, eps: float) -> np.ndarray:
        """Levi-Civita coefficients of ``g_eps`` by the Koszul formula."""
        return levi_civita_coefficients(self.c, metric_eps(self.dim, eps))

    def R_hat(self, eps: float) -> np.ndarray:
        return curvature_from_coefficients(self.gamma_hat(eps), self.c)

    def R_lc_generic(self, eps: float) -> np.ndarray:
        return curvature_from_coefficients(self.gamma_lc(eps), self.c)

    # bilinear helpers ------------------------------------------------------
    def J_of(self, z, x) -> np.ndarray:
        """``J_z x``."""
        return np.einsum("z,x,zxk->k", z, x, self.Jt)

    def T_of(self, x, y) -> np.ndarray:
        return np.einsum("x,y,xyk->k", x, y, self.T)

    def R_of(self, R, u, v, w) -> np.ndarray:
        return np.einsum("i,j,k,ijkm->m", u, v, w, R)

    def descriptor(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind.value,
            "name": self.name,
            "n": self.n,
            "m": self.m,
            "chart_dim": self.dim,
            "frame": [f"X{i + 1}" for i in range(self.n // 2)]
                     + [f"Y{i + 1}" for i in range(self.n // 2)] + ["S"],
            "structure_constants": np.round(self.c, 15).tolist(),
            "k1": _json_float(self.k1),
            "k2": _json_float(self.k2),
            "delta": self.delta,
            "sr_sign": self.sigma,
        }

    def to_json(self) -> str:
        return json.dumps(self.descriptor(), indent=2, sort_keys=True)


def _json_float(v):
    v = float(v)
    if math.isnan(v):
        return None
    return float(round(v, 12))


def _check_eps(eps):
    if not eps > 0:
        raise ModelError("eps must be positive")


def parse_kind(kind) -> ModelKind:
    if isinstance(kind, ModelKind):
        return kind
    key = str(kind).replace("_", "").replace("-", "").replace(" ", "").lower()
    if key in _KIND_ALIASES:
        return _KIND_ALIASES[key]
    raise ModelError(f"unknown model kind {kind!r}")


_BACKEND_KEY = {ModelKind.HEISENBERG: "heisenberg", ModelKind.HOPF: "hopf",
                ModelKind.ADS: "ads"}


@lru_cache(maxsize=None)
def build_model(kind, n: int) -> ModelSpace:
    """Construct a model space and measure its curvature constants.

    Parameters
    ----------
    kind : ModelKind or str
        ``Heisenberg``, ``HopfSphere`` or ``AntiDeSitter``.
    n : int
        Even horizontal dimension; the curved models are provided for
        ``n = 2`` only.

    Raises
    ------
    ModelError
        For an unsupported ``(kind, n)`` combination.
    """
    kind = parse_kind(kind)
    if n < 2 or n % 2:
        raise ModelError("n must be even and >= 2")
    if kind is not ModelKind.HEISENBERG and n != 2:
        raise ModelError(f"{kind.value} is only provided for n = 2")
    backend = make_backend(_BACKEND_KEY[kind], n)
    c = backend.structure_constants()
    d = n + 1
    gam = bott_coefficients(c, n)
    T = torsion_from_coefficients(gam, c)
    # calibration: T(X_1, Y_1) = S
    if not np.allclose(T[0, n // 2], np.eye(d)[-1], atol=1e-12):
        raise ModelError("frame is not contact calibrated")
    # (J_{E_z} E_x)_y = g(E_z, T(E_x, E_y)), g orthonormal
    Jt = np.einsum("xyz->zxy", T)
    R = curvature_from_coefficients(gam, c)
    e = np.eye(d)
    x1, y1 = e[0], e[n // 2]
    k1 = float(np.einsum("i,j,k,ijkm,m->", x1, y1, y1, R, x1))
    k2 = math.nan
    if n >= 4:
        x2 = e[1]
        k2 = float(np.einsum("i,j,k,ijkm,m->", x1, x2, x2, R, x1))
    # SR sign from the vertical-momentum term of the geodesic equation:
    # nabla_{g'} g' = -(1/eps) J_{g'} g' = -p J_S g'_H, and J_S = J.
    jsx = np.einsum("x,zxk->zk", x1, Jt)[-1]
    sigma = -int(np.sign(jsx @ y1))
    return ModelSpace(kind=kind, n=n, c=c, gamma_bott=gam, T=T, Jt=Jt, R_bott=R,
                      k1=k1, k2=k2, delta=backend.delta, sigma=sigma, backend=backend)


def model_from_name(name: str) -> ModelSpace:
    """Build from a short id such as ``heisenberg3``, ``heisenberg5``, ``hopf3``, ``ads3``."""
    key = name.lower().strip()
    for prefix, kind in (("heisenberg", ModelKind.HEISENBERG), ("hopf", ModelKind.HOPF),
                         ("ads", ModelKind.ADS)):
        if key.startswith(prefix):
            rest = key[len(prefix):]
            dim = int(rest) if rest else 3
            return build_model(kind, dim - 1)
    raise ModelError(f"unknown model id {name!r}")


# public operations -------------------------------------------------------------

def j_apply(M: ModelSpace, v) -> FrameVector:
    """``J v`` with ``J X_i = Y_i``, ``J Y_i = -X_i``, ``J S = 0``."""
    a = _coeffs(v)
    out = M.J_of(np.eye(M.dim)[-1], a)
    return FrameVector(out, _common_base(v))


def torsion(M: ModelSpace, v, w) -> FrameVector:
    """``T(v, w) = <J v_H, w_H> S``."""
    base = _common_base(v, w)
    return FrameVector(M.T_of(_coeffs(v), _coeffs(w)), base)


def curvature_bott(M: ModelSpace, x, u, v, w) -> FrameVector:
    """Bott curvature ``R(u, v) w`` at ``x``; frame coefficients."""
    base = _common_base(u, v, w)
    _match_base(x, base)
    return FrameVector(M.R_of(M.R_bott, _coeffs(u), _coeffs(v), _coeffs(w)), x)


def curvature_adjoint(M: ModelSpace, eps: float, x, u, v, w) -> FrameVector:
    """Curvature of the adjoint connection ``hat nabla^eps``.

    On Sasakian models this equals ``R(u,v)w + (1/eps) <J u_H, v_H> J w``;
    the returned value is computed from the connection coefficients, see
    :func:`curvature_adjoint_simplified` for the closed expression.
    """
    _check_eps(eps)
    base = _common_base(u, v, w)
    _match_base(x, base)
    return FrameVector(M.R_of(M.R_hat(eps), _coeffs(u), _coeffs(v), _coeffs(w)), x)


def curvature_adjoint_simplified(M: ModelSpace, eps: float, u, v, w) -> np.ndarray:
    _check_eps(eps)
    u, v, w = (_coeffs(a) for a in (u, v, w))
    e_s = np.eye(M.dim)[-1]
    Ju = M.J_of(e_s, u)
    Jw = M.J_of(e_s, w)
    return M.R_of(M.R_bott, u, v, w) + (Ju[:-1] @ v[:-1]) / eps * Jw


def lc_curvature_expansion(M: ModelSpace, eps: float) -> np.ndarray:
    """Levi-Civita curvature of ``g_eps`` from the Bott-connection expansion.

    Evaluates ``R^{g_eps}(X, Y) Z`` term by term from ``R``, ``T``, ``J`` and
    their Bott covariant derivatives.
    """
    _check_eps(eps)
    d = M.dim
    gam = M.gamma_bott
    DT = covariant_derivative_12(M.T, gam)
    DJ = covariant_derivative_12(M.Jt, gam)  # DJ[x, y, z] = (nabla_x J)_y z
    e = np.eye(d)
    T = lambda a, b: M.T_of(a, b)
    J = lambda a, b: M.J_of(a, b)
    dT = lambda a, b, c_: np.einsum("i,j,k,ijkm->m", a, b, c_, DT)
    dJ = lambda a, b, c_: np.einsum("i,j,k,ijkm->m", a, b, c_, DJ)
    out = np.zeros((d, d, d, d))
    ie = 1.0 / eps
    for i in range(d):
        X = e[i]
        for j in range(d):
            Y = e[j]
            for k in range(d):
                Z = e[k]
                val = M.R_of(M.R_bott, X, Y, Z)
                val = val - 0.5 * dT(X, Y, Z) + 0.5 * dT(Y, X, Z)
                val = val + 0.5 * ie * (dJ(X, Y, Z) - dJ(Y, X, Z) + dJ(X, Z, Y) - dJ(Y, Z, X))
                val = val + 0.5 * ie * J(T(X, Y), Z)
                val = val - 0.25 * ie * T(X, J(Y, Z) + J(Z, Y))
                val = val + 0.25 * ie * ie * J(X, J(Y, Z) + J(Z, Y))
                val = val - 0.25 * ie * J(T(Y, Z), X)
                val = val + 0.25 * ie * T(Y, J(X, Z) + J(Z, X))
                val = val - 0.25 * ie * ie * J(Y, J(X, Z) + J(Z, X))
                val = val + 0.25 * ie * J(T(X, Z), Y)
                out[i, j, k] = val
    return out


def curvature_levicivita(M: ModelSpace, eps: float, x, u, v, w) -> FrameVector:
    """Levi-Civita curvature ``R^{g_eps}(u, v) w`` from the Bott expansion."""
    base = _common_base(u, v, w)
    _match_base(x, base)
    R = _lc_expansion_cached(M, float(eps))
    return FrameVector(M.R_of(R, _coeffs(u), _coeffs(v), _coeffs(w)), x)


_LC_CACHE: dict = {}


def _lc_expansion_cached(M, eps):
    key = (id(M), eps)
    if key not in _LC_CACHE:
        _LC_CACHE[key] = lc_curvature_expansion(M, eps)
    return _LC_CACHE[key]


def ricci_from_curvature(R: np.ndarray, eps: float, u) -> float:
    """``Ric(u, u) = sum_a g_eps(R(e_a, u) u, e_a)`` over a ``g_eps``-orthonormal frame."""
    u = np.asarray(u, dtype=float)
    d = R.shape[0]
    G = metric_eps(d, eps)
    basis = np.eye(d)
    basis[-1, -1] = math.sqrt(eps)
    tot = 0.0
    for ea in basis:
        val = np.einsum("i,j,k,ijkm->m", ea, u, u, R)
        tot += val @ G @ ea
    return float(tot)


def ricci_eps(M: ModelSpace, eps: float, x, u) -> float:
    """Ricci curvature ``Ric^{g_eps}(u, u)`` from the Levi-Civita expansion."""
    _check_eps(eps)
    _match_base(x, _common_base(u))
    return ricci_from_curvature(_lc_expansion_cached(M, float(eps)), eps, _coeffs(u))


def ricci_horizontal_bott(M: ModelSpace, X) -> float:
    """Horizontal Ricci curvature of the Bott connection ``Ric_H(X, X)``."""
    X = np.asarray(X, dtype=float)
    e = np.eye(M.dim)
    return float(sum(M.R_of(M.R_bott, e[i], X, X) @ e[i] for i in range(M.n)))


def ricci_closed_form(M: ModelSpace, eps: float, u) -> float:
    """``Ric_H(X,X) + (1/2eps)<J^2 X, X> + Ric_V(Z,Z) - (1/4eps^2) Tr(J_Z^2)`` for ``u = X + Z``.

    ``Ric_V`` vanishes for one-dimensional leaves.
    """
    _check_eps(eps)
    u = np.asarray(u, dtype=float)
    X = u.copy()
    X[-1] = 0.0
    Z = np.zeros_like(u)
    Z[-1] = u[-1]
    e_s = np.eye(M.dim)[-1]
    J2X = M.J_of(e_s, M.J_of(e_s, X))
    JZ = np.einsum("z,zxk->xk", Z, M.Jt)
    trJZ2 = float(np.trace(JZ @ JZ))
    return ricci_horizontal_bott(M, X) + 0.5 / eps * float(J2X @ X) - 0.25 / eps ** 2 * trJZ2


def ricci_mixed_closed_form(M: ModelSpace, eps: float, X, Z) -> float:
    return 0.0


def yang_mills_divergence(M: ModelSpace) -> np.ndarray:
    """``delta_H T(E_k) = -sum_j (nabla_{X_j} T)(X_j, E_k)`` for every frame vector."""
    DT = covariant_derivative_12(M.T, M.gamma_bott)
    return -np.einsum("jjkm->km", DT[:M.n, :M.n])


def foliation_bounds(M: ModelSpace):
    from .comparison import FoliationBounds
    return FoliationBounds.for_model(M)


def _match_base(x, base):
    if x is not None and base is not None and not np.allclose(np.asarray(x, float), base,
                                                              atol=1e-12):
        raise ModelError("vectors are not based at x")


# coordinate cross-check ----------------------------------------------------------

def chart_metric(M: ModelSpace, eps: float, x) -> np.ndarray:
    """Coordinate Gram matrix of ``g_eps`` in the model chart."""
    Cf = M.backend.coframe(x)
    return Cf @ metric_eps(M.dim, eps) @ Cf.T


_STENCIL = (np.array([-2.0, -1.0, 1.0, 2.0]), np.array([1.0, -8.0, 8.0, -1.0]) / 12.0)


def _fd_gradient(f, x, h):
    x = np.asarray(x, dtype=float)
    offs, wts = _STENCIL
    out = []
    for mu in range(x.size):
        acc = 0.0
        for o, w in zip(offs, wts):
            xp = x.copy()
            xp[mu] += o * h
            acc = acc + w * f(xp)
        out.append(acc / h)
    return np.stack(out)


def chart_christoffel(M: ModelSpace, eps: float, x, h: float = 1e-3) -> np.ndarray:
    """``Gam[mu, nu, sigma]`` with ``nabla_{d_mu} d_nu = Gam[mu, nu, sigma] d_sigma``."""
    G = chart_metric(M, eps, x)
    dG = _fd_gradient(lambda y: chart_metric(M, eps, y), x, h)  # dG[l, a, b] = d_l G_ab
    low = 0.5 * (np.einsum("mln->mnl", dG) + np.einsum("nlm->mnl", dG) - np.einsum("lmn->mnl", dG))
    return np.einsum("mnl,ls->mns", low, np.linalg.inv(G))


def chart_curvature_fd(M: ModelSpace, eps: float, x, h: float = 1e-3) -> np.ndarray:
    """Coordinate curvature ``Rc[mu, nu, rho, sigma]`` of ``g_eps`` by finite differences."""
    Gam = chart_christoffel(M, eps, x, h)
    dGam = _fd_gradient(lambda y: chart_christoffel(M, eps, y, h), x, h)
    return (np.einsum("mnrs->mnrs", dGam) - np.einsum("nmrs->mnrs", dGam)
            + np.einsum("nrl,mls->mnrs", Gam, Gam) - np.einsum("mrl,nls->mnrs", Gam, Gam))


def frame_curvature_in_chart(M: ModelSpace, R: np.ndarray, x) -> np.ndarray:
    """Transform frame curvature components to chart components at ``x``."""
    Cf = M.backend.coframe(x)
    F = np.linalg.inv(Cf)  # E_a = F[a, mu] d_mu
    return np.einsum("ai,bj,ck,ijkm,ms->abcs", Cf, Cf, Cf, R, F)


def chart_ricci_fd(M: ModelSpace, eps: float, x, h: float = 1e-3) -> np.ndarray:
    """Frame components of the finite-difference Ricci tensor at ``x``."""
    Rc = chart_curvature_fd(M, eps, x, h)
    ric_c = np.einsum("mnrm->nr", Rc)
    F = np.linalg.inv(M.backend.coframe(x))
    return F @ ric_c @ F.T


def sample_chart_points(M: ModelSpace, count: int, rng, scale: float = 0.6) -> np.ndarray:
    """Random chart points inside the region where every chart is regular."""
    return rng.uniform(-scale, scale, size=(count, M.dim))
