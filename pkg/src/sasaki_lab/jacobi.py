"""Jacobi fields along ``g_eps`` geodesics, index forms and Hessians of distance.

Fields are described in a ``hat nabla^eps``-parallel, ``g_eps``-orthonormal
frame ``P(t)`` along the arc, started from ``(E_1, ..., E_n, sqrt(eps) S)``.
In that frame ``Y' = hat nabla^eps_{g'} Y`` is the ordinary derivative of
the components, the metric is the identity and ``g'`` has constant
components.

The propagated equation is

    Y'' = T(g', Y') + (1/eps) J_{g'} Y' - (1/eps) J_{Y'} g'
          + R(g', Y) g' + (1/eps) J_{T(g', Y)} g',

with ``R`` the Bott curvature (or any supplied curvature with the same
symmetries).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar

from . import kernels
from .geodesics import GeodesicArc, IntegratorError, RTOL, ATOL, closed_velocity
from .models import ModelSpace, metric_eps

JACOBI_RTOL = 1e-11
JACOBI_ATOL = 1e-13
GL_NODES = 12


class ConjugatePointError(RuntimeError):
    """The fundamental Jacobi matrix is numerically singular at the endpoint."""

    def __init__(self, message, singular_values=None):
        super().__init__(message)
        self.singular_values = singular_values


class WindowError(ValueError):
    """Closed-form Jacobi field requested outside its validity window."""


def _on_basis(dim: int, eps: float) -> np.ndarray:
    B = np.eye(dim)
    B[-1, -1] = math.sqrt(eps)
    return B


def _curvature_callable(M: ModelSpace, curvature):
    if curvature is None:
        R = M.R_bott
    elif callable(curvature):
        return curvature
    else:
        R = np.asarray(curvature, dtype=float)
    return lambda u, v, w: np.einsum("i,j...,k,ijkm->m...", u, v, w, R)


def constant_curvature_tensor(M: ModelSpace, k: float) -> np.ndarray:
    """Horizontal constant-curvature tensor ``R(u,v)w = k(<v,w>u - <u,w>v)`` on ``H``.

    Useful as a supplied curvature for the propagator: it is the only
    curvature input that the closed-form field of case A needs.
    """
    d = M.dim
    P = np.eye(d)
    P[-1, -1] = 0.0
    R = k * (np.einsum("jk,im->ijkm", P, P) - np.einsum("ik,jm->ijkm", P, P))
    return R


# parallel transport ---------------------------------------------------------------

def _velocity_fn(arc: GeodesicArc):
    a0, p, eps, M = arc.v0[:-1], arc.p, arc.eps, arc.model
    return lambda t: closed_velocity(M, eps, a0, p, t)


def parallel_frame(arc: GeodesicArc, eps_conn: float | None = None, t_eval=None):
    """Transport the orthonormal start frame along ``arc`` with ``hat nabla^{eps_conn}``.

    Parameters
    ----------
    eps_conn : float, optional
        Parameter of the adjoint connection; defaults to ``arc.eps``.
        ``2 * arc.eps`` gives the frame used by the expanded horizontal
        index form.

    Returns
    -------
    callable
        ``t -> P(t)`` with ``P[:, j]`` the frame coefficients of the
        ``j``-th transported vector.
    """
    M = arc.model
    e = arc.eps if eps_conn is None else eps_conn
    Gh = M.gamma_hat(e)
    vel = _velocity_fn(arc)
    d = M.dim

    def rhs(t, y):
        P = y.reshape(d, d)
        A = np.einsum("i,ijk->kj", vel(t), Gh)
        return (-A @ P).ravel()

    sol = solve_ivp(rhs, (0.0, arc.length), _on_basis(d, arc.eps).ravel(), method="DOP853",
                    rtol=JACOBI_RTOL, atol=JACOBI_ATOL, dense_output=True, t_eval=t_eval)
    if not sol.success:
        raise IntegratorError(sol.message)
    return lambda t: sol.sol(t).reshape(d, d, *np.shape(t)) if np.ndim(t) == 0 else \
        np.moveaxis(sol.sol(t).reshape(d, d, -1), -1, 0)


# propagation ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class JacobiSolution:
    """Jacobi fields along an arc, sampled and with dense output.

    Attributes
    ----------
    t : ndarray
        Sample times ``0 .. r``.
    Y, dY : ndarray
        Components of ``Y`` and ``Y'`` in the parallel orthonormal frame,
        shape ``(len(t), dim, ncols)``.
    frame : ndarray
        Transported frame ``P(t)`` (frame coefficients), shape ``(len(t), dim, dim)``.
    residual : float
        Sup norm of the equation residual at the samples, by an independent
        evaluation of both sides through the dense output.
    """

    arc: GeodesicArc = field(repr=False)
    t: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)
    dY: np.ndarray = field(repr=False)
    frame: np.ndarray = field(repr=False)
    Y0: np.ndarray = field(repr=False)
    dY0: np.ndarray = field(repr=False)
    residual: float = 0.0
    _sol: object = field(default=None, repr=False)
    _rhs: object = field(default=None, repr=False)

    def __call__(self, t):
        """``(P, Y, Y')`` at time(s) ``t`` from the dense output."""
        d = self.arc.model.dim
        k = self.Y0.shape[1]
        z = self._sol.sol(t)
        scalar = np.ndim(t) == 0
        z = z[:, None] if scalar else z
        P = np.moveaxis(z[:d * d].reshape(d, d, -1), -1, 0)
        Y = np.moveaxis(z[d * d:d * d + d * k].reshape(d, k, -1), -1, 0)
        W = np.moveaxis(z[d * d + d * k:].reshape(d, k, -1), -1, 0)
        if scalar:
            return P[0], Y[0], W[0]
        return P, Y, W

    def frame_components(self, t):
        """Frame coefficients of ``Y`` and ``Y'`` at ``t``."""
        P, Y, W = self(t)
        return P @ Y, P @ W

    @property
    def endpoint(self):
        return self.Y[-1], self.dY[-1]


def _jacobi_rhs(M: ModelSpace, eps: float, vel, curv, ncols: int):
    d = M.dim
    Gh = M.gamma_hat(eps)
    G = metric_eps(d, eps)
    T, Jt = M.T, M.Jt
    ie = 1.0 / eps

    def second(a, y, w):
        """Frame coefficients of Y'' given frame coefficients ``y``, ``w`` (columns)."""
        out = np.einsum("x,yk,xym->mk", a, w, T)
        out += ie * np.einsum("z,xk,zxm->mk", a, w, Jt)
        out -= ie * np.einsum("zk,x,zxm->mk", w, a, Jt)
        out += curv(a, y, a)
        Tay = np.einsum("x,yk,xym->mk", a, y, T)
        out += ie * np.einsum("zk,x,zxm->mk", Tay, a, Jt)
        return out

    def rhs(t, z):
        a = vel(t)
        P = z[:d * d].reshape(d, d)
        U = z[d * d:d * d + d * ncols].reshape(d, ncols)
        W = z[d * d + d * ncols:].reshape(d, ncols)
        A = np.einsum("i,ijk->kj", a, Gh)
        dP = -A @ P
        acc = second(a, P @ U, P @ W)
        dW = P.T @ G @ acc
        return np.concatenate([dP.ravel(), W.ravel(), dW.ravel()])

    return rhs, second


def jacobi_propagate(arc: GeodesicArc, Y0, dY0, curvature=None, samples: int = 65,
                     rtol: float = JACOBI_RTOL, atol: float = JACOBI_ATOL) -> JacobiSolution:
    """Propagate Jacobi fields from initial data given in the parallel frame.

    Parameters
    ----------
    arc : GeodesicArc
        Unit-speed arc with ``eps > 0``.
    Y0, dY0 : array_like
        Components of ``Y(0)`` and ``Y'(0)``; shape ``(dim,)`` or
        ``(dim, k)`` for ``k`` fields at once.
    curvature : ndarray or callable, optional
        Curvature ``R(u, v) w`` to use instead of the model's Bott curvature;
        a tensor ``R[i, j, k, m]`` or a callable on frame coefficients.
    """
    if not arc.eps > 0:
        raise ValueError("jacobi_propagate requires eps > 0")
    M = arc.model
    d = M.dim
    Y0 = np.asarray(Y0, dtype=float)
    dY0 = np.asarray(dY0, dtype=float)
    Y0 = Y0.reshape(d, -1)
    dY0 = dY0.reshape(d, -1)
    k = Y0.shape[1]
    vel = _velocity_fn(arc)
    curv = _curvature_callable(M, curvature)
    rhs, second = _jacobi_rhs(M, arc.eps, vel, curv, k)
    z0 = np.concatenate([_on_basis(d, arc.eps).ravel(), Y0.ravel(), dY0.ravel()])
    r = arc.length
    sol = solve_ivp(rhs, (0.0, r), z0, method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True)
    if not sol.success:
        raise IntegratorError(f"Jacobi propagation failed: {sol.message}")
    ts = np.linspace(0.0, r, samples)
    out = JacobiSolution(arc=arc, t=ts, Y=None, dY=None, frame=None, Y0=Y0, dY0=dY0,
                         _sol=sol, _rhs=rhs)
    P, Y, W = out(ts)
    res = _residual(out, M, arc.eps, vel, second, ts)
    object.__setattr__(out, "Y", Y)
    object.__setattr__(out, "dY", W)
    object.__setattr__(out, "frame", P)
    object.__setattr__(out, "residual", res)
    return out


def _residual(sol: JacobiSolution, M, eps, vel, second, ts) -> float:
    """Sup norm of ``U'' - P^{-1} Y''(U, U')`` with ``U''`` by differentiating the dense ``U'``."""
    G = metric_eps(M.dim, eps)
    h = 1e-4 * max(sol.arc.length, 1e-3)
    worst = 0.0
    for t in ts[1:-1]:
        tl, tr = max(t - 2 * h, 0.0), min(t + 2 * h, sol.arc.length)
        if tr - tl < 4 * h:
            continue
        _, _, Wm2 = sol(t - 2 * h)
        _, _, Wm1 = sol(t - h)
        _, _, Wp1 = sol(t + h)
        _, _, Wp2 = sol(t + 2 * h)
        dW = (Wm2 - 8 * Wm1 + 8 * Wp1 - Wp2) / (12 * h)
        P, U, W = sol(t)
        acc = P.T @ G @ second(vel(t), P @ U, P @ W)
        scale = 1.0 + np.max(np.abs(U)) + np.max(np.abs(W))
        worst = max(worst, float(np.max(np.abs(dW - acc)) / scale))
    return worst


def fundamental_solution(arc: GeodesicArc, curvature=None, samples: int = 65) -> JacobiSolution:
    """All Jacobi fields with ``Y(0) = 0`` and ``Y'(0) = e_j`` (parallel orthonormal basis)."""
    d = arc.model.dim
    return jacobi_propagate(arc, np.zeros((d, d)), np.eye(d), curvature=curvature,
                            samples=samples)


# closed forms ----------------------------------------------------------------------

class JacobiCase(str, Enum):
    A = "A"
    B = "B"
    C = "C"


@dataclass(frozen=True)
class ClosedFormJacobi:
    """Explicit Jacobi field on a constant-curvature Sasakian model.

    The three families are

    * ``A``: horizontal ``v0`` orthogonal to ``g'_H`` and ``J g'_H``;
      ``Y = phi_mu(t)/phi_mu(r) (cos(s(r-t)/2) v0 - sin(s(r-t)/2) J v0)``
      with ``s = <S, g'>_eps`` and ``mu = (|g'_H|^2 - 1)/(4 eps) - k |g'_H|^2``;
    * ``B``: horizontal arc, ``Y(r) = J g'``, built from ``psi_{-k}``;
    * ``C``: vertical arc, any horizontal ``v0``.

    Vectors are identified with their ``hat nabla^eps``-parallel extensions.
    Components returned by :meth:`evaluate` are in the parallel orthonormal
    frame of the arc.
    """

    case: JacobiCase
    r: float
    eps: float
    k: float
    mu: float
    C_eps: float
    s: float
    v0: np.ndarray
    gdot: np.ndarray
    Jmat: np.ndarray

    def evaluate(self, t):
        """Return ``(Y(t), Y'(t))`` as arrays of shape ``(..., dim)``."""
        t = np.asarray(t, dtype=float)
        if self.case is JacobiCase.A:
            return self._eval_a(t)
        if self.case is JacobiCase.B:
            return self._eval_b(t)
        return self._eval_c(t)

    def _eval_a(self, t):
        v0 = self.v0
        Jv0 = self.Jmat @ v0
        K = kernels.kernel_bundle
        br = K(self.mu, self.r)
        phi_t = np.vectorize(lambda x: K(self.mu, x).phi)(t)
        dphi_t = np.vectorize(lambda x: K(self.mu, x).dphi)(t)
        ang = self.s * (self.r - t) / 2.0
        c, sn = np.cos(ang), np.sin(ang)
        f = phi_t / br.phi
        df = dphi_t / br.phi
        Y = f[..., None] * (c[..., None] * v0 - sn[..., None] * Jv0)
        # d/dt of cos(s(r-t)/2) = (s/2) sin, of sin = -(s/2) cos
        dY = (df[..., None] * (c[..., None] * v0 - sn[..., None] * Jv0)
              + f[..., None] * (self.s / 2.0) * (sn[..., None] * v0 + c[..., None] * Jv0))
        return Y, dY

    def _eval_b(self, t):
        mu = -self.k
        K = kernels.kernel_bundle
        br = K(mu, self.r)
        vals = [K(mu, float(x)) for x in np.atleast_1d(t)]
        psi = np.array([b.psi for b in vals])
        dpsi = np.array([b.dpsi for b in vals])
        ddpsi = np.array([b.ddpsi for b in vals])
        dddpsi = np.array([b.dphi for b in vals])
        tt = np.atleast_1d(t)
        e, r, C = self.eps, self.r, self.C_eps
        f = (br.dpsi * dpsi + (e * r - br.psi) * ddpsi) / C
        df = (br.dpsi * ddpsi + (e * r - br.psi) * dddpsi) / C
        F = (br.dpsi * psi - br.psi * dpsi + e * (r * dpsi - tt * br.dpsi)) / C
        dF = (br.dpsi * dpsi - br.psi * ddpsi + e * (r * ddpsi - br.dpsi)) / C
        Jg = self.Jmat @ self.gdot
        Sv = np.zeros_like(Jg)
        Sv[-1] = 1.0 / math.sqrt(self.eps)  # g-unit S in orthonormal components
        Y = f[:, None] * Jg + F[:, None] * Sv
        dY = df[:, None] * Jg + dF[:, None] * Sv
        if np.ndim(t) == 0:
            return Y[0], dY[0]
        return Y, dY

    def _eval_c(self, t):
        q = math.sqrt(self.eps)
        r = self.r
        den = 2.0 * (1.0 - math.cos(r / q))
        Jv0 = self.Jmat @ self.v0
        a = (1.0 + np.cos((r - t) / q) - math.cos(r / q) - np.cos(t / q)) / den
        b = (np.sin((r - t) / q) - math.sin(r / q) + np.sin(t / q)) / den
        da = (np.sin((r - t) / q) + np.sin(t / q)) / (q * den)
        db = (-np.cos((r - t) / q) + np.cos(t / q)) / (q * den)
        Y = a[..., None] * self.v0 - self.s * b[..., None] * Jv0
        dY = da[..., None] * self.v0 - self.s * db[..., None] * Jv0
        return Y, dY


def _j_matrix_on(M: ModelSpace, eps: float) -> np.ndarray:
    """Matrix of ``J = J_S`` in the orthonormal frame (``J`` kills ``S``)."""
    B = _on_basis(M.dim, eps)
    Js = M.Jt[-1].T  # Js[k, x] = (J E_x)_k
    return np.linalg.solve(B, Js @ B)


def closed_form(case, arc: GeodesicArc, v0=None, k: float | None = None) -> ClosedFormJacobi:
    """Closed-form Jacobi field of the requested case along ``arc``.

    Parameters
    ----------
    case : {'A', 'B', 'C'}
    arc : GeodesicArc
        Unit-speed arc with ``eps > 0``.
    v0 : array_like, optional
        Endpoint value in orthonormal components (cases A and C). Case B
        always ends at ``J g'``.
    k : float, optional
        Horizontal sectional curvature; defaults to the model's ``k1``.

    Raises
    ------
    WindowError
        Outside the validity window of the case.
    """
    case = JacobiCase(case)
    M = arc.model
    eps = arc.eps
    if not eps > 0:
        raise WindowError("closed forms need eps > 0")
    r = arc.length
    k = M.k1 if k is None else float(k)
    B = _on_basis(M.dim, eps)
    gdot = np.linalg.solve(B, arc.v0)
    Jm = _j_matrix_on(M, eps)
    lam = arc.lam
    s_val = float(arc.v0[-1] / eps)  # <S, g'>_eps
    s_unit = float(math.sqrt(eps) * s_val)
    mu = (lam - 1.0) / (4.0 * eps) - lam * k
    C = float("nan")
    if case is JacobiCase.A:
        if lam <= 1e-14:
            raise WindowError("case A needs a non-vertical arc")
        if v0 is None:
            raise WindowError("case A needs v0")
        v0 = np.asarray(v0, dtype=float)
        gh = gdot.copy()
        gh[-1] = 0.0
        for w in (gh, Jm @ gh):
            if abs(w @ v0) > 1e-10 * (1 + np.linalg.norm(v0)):
                raise WindowError("v0 must be orthogonal to g'_H and J g'_H")
        if abs(v0[-1]) > 1e-14:
            raise WindowError("v0 must be horizontal")
        if mu < 0 and math.sqrt(-mu) * r >= math.pi:
            raise WindowError("sqrt(-mu) r must stay below pi")
        s = s_val
    elif case is JacobiCase.B:
        if abs(1.0 - lam) > 1e-12:
            raise WindowError("case B needs a horizontal arc")
        if k > 0 and math.sqrt(k) * r > math.pi:
            raise WindowError("sqrt(k) r must not exceed pi")
        b = kernels.kernel_bundle(-k, r)
        C = b.dpsi ** 2 - b.psi * b.ddpsi + eps * r * b.ddpsi
        if not C > 0:
            raise WindowError("C_eps must be positive")
        v0 = Jm @ gdot
        s = 0.0
    else:
        if lam > 1e-14:
            raise WindowError("case C needs a vertical arc")
        if r >= 2.0 * math.pi * math.sqrt(eps):
            raise WindowError("case C needs r < 2 pi sqrt(eps)")
        if v0 is None:
            raise WindowError("case C needs v0")
        v0 = np.asarray(v0, dtype=float)
        if abs(v0[-1]) > 1e-14:
            raise WindowError("v0 must be horizontal")
        s = s_unit
    return ClosedFormJacobi(case=case, r=r, eps=eps, k=k, mu=mu, C_eps=float(C), s=s,
                            v0=np.asarray(v0, dtype=float), gdot=gdot, Jmat=Jm)


def closed_form_vs_ode(cf: ClosedFormJacobi, arc: GeodesicArc, curvature=None,
                       samples: int = 41) -> float:
    """Sup over ``[0, r]`` of ``|Y_closed - Y_ode|`` with the ODE started from the closed-form data."""
    Y0, dY0 = cf.evaluate(0.0)
    sol = jacobi_propagate(arc, Y0, dY0, curvature=curvature, samples=samples)
    Yc, _ = cf.evaluate(sol.t)
    return float(np.max(np.abs(sol.Y[:, :, 0] - Yc)))


# index form ------------------------------------------------------------------------

def _gauss_nodes(r: float, panels: int, order: int = GL_NODES):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, r, panels + 1)
    h = np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    t = (mid[:, None] + 0.5 * h[:, None] * x[None, :]).ravel()
    wt = (0.5 * h[:, None] * w[None, :]).ravel()
    return t, wt


class IndexContext:
    """Precomputed frame data for repeated index-form evaluations on one arc."""

    def __init__(self, arc: GeodesicArc, panels: int | None = None):
        if not arc.eps > 0:
            raise ValueError("index forms need eps > 0")
        M = arc.model
        self.arc = arc
        self.M = M
        self.eps = arc.eps
        d = M.dim
        if panels is None:
            panels = int(8 + 8 * math.ceil(arc.length * (1 + abs(arc.p))))
        self.t, self.w = _gauss_nodes(arc.length, panels)
        frame = parallel_frame(arc)
        self.P = frame(self.t)  # (K, d, d)
        self.vel = closed_velocity(M, arc.eps, arc.v0[:-1], arc.p, self.t)  # (K, d)
        self.G = metric_eps(d, arc.eps)
        self.Rhat = M.R_hat(arc.eps)
        self.D = M.gamma_eps(arc.eps) - M.gamma_hat(arc.eps)

    def _frame(self, U):
        return np.einsum("kab,k...b->k...a", self.P, U)

    def index(self, U, dU):
        """``I(Y, Y)`` for fields given at the nodes by parallel components ``U``, ``U'``.

        ``U`` has shape ``(K, dim)`` or ``(K, batch, dim)``.
        """
        y = self._frame(U)
        yp = self._frame(dU)
        a = self.vel
        if y.ndim == 3:
            a = a[:, None, :]
        ne = yp + np.einsum("k...i,k...j,ijm->k...m", np.broadcast_to(a, y.shape), y, self.D)
        first = np.einsum("k...a,ab,k...b->k...", ne, self.G, yp)
        Ry = np.einsum("k...i,k...j,k...l,ijlm->k...m", np.broadcast_to(a, y.shape), y, y,
                       self.Rhat)
        second = np.einsum("k...a,ab,k...b->k...", Ry, self.G, np.broadcast_to(a, y.shape))
        integrand = first - second
        return np.tensordot(self.w, integrand, axes=(0, 0))

    def index_horizontal_expanded(self, U, dU):
        """Expanded horizontal index form (valid for horizontal fields).

        ``int |hat nabla^{2eps} Y|_g^2 - <R(g',Y)Y, g'>_g``
        ``+ (1/eps) int <(nabla_Y T)(Y, g'), g'>_g + |T(g', Y)|_g^2 - (1/4eps)|J_{g'} Y|_g^2``.
        """
        M = self.M
        e = self.eps
        y = self._frame(U)
        yp = self._frame(dU)
        a = np.broadcast_to(self.vel if y.ndim == 2 else self.vel[:, None, :], y.shape)
        Ja_y = np.einsum("k...z,k...x,zxm->k...m", a, y, M.Jt)
        d2 = yp - Ja_y / (2.0 * e)
        g = np.eye(M.dim)
        nrm = np.einsum("k...a,ab,k...b->k...", d2, g, d2)
        RY = np.einsum("k...i,k...j,k...l,ijlm->k...m", a, y, y, M.R_bott)
        curv = np.einsum("k...m,k...m->k...", RY, a)
        from .models import covariant_derivative_12
        DT = covariant_derivative_12(M.T, M.gamma_bott)
        dT = np.einsum("k...i,k...j,k...l,ijlm->k...m", y, y, a, DT)
        dTa = np.einsum("k...m,k...m->k...", dT, a)
        Tay = np.einsum("k...x,k...y,xym->k...m", a, y, M.T)
        tn = np.einsum("k...m,k...m->k...", Tay, Tay)
        jn = np.einsum("k...m,k...m->k...", Ja_y, Ja_y)
        integrand = nrm - curv + (dTa + tn - jn / (4.0 * e)) / e
        return np.tensordot(self.w, integrand, axes=(0, 0))


def index_form(arc: GeodesicArc, field_fn, expanded: bool = False, check: bool = True,
               panels: int | None = None):
    """Index form of a field along ``arc`` by composite Gauss-Legendre quadrature.

    Parameters
    ----------
    field_fn : callable
        ``t -> (U(t), U'(t))`` in parallel orthonormal components,
        vectorized over an array of ``t``.
    expanded : bool
        Also return the expanded horizontal form; with ``check`` the two
        must agree to ``1e-9`` (horizontal fields only).
    """
    ctx = IndexContext(arc, panels)
    U, dU = field_fn(ctx.t)
    val = float(ctx.index(U, dU))
    if not expanded:
        return val
    alt = float(ctx.index_horizontal_expanded(U, dU))
    if check and abs(val - alt) > 1e-9 * (1.0 + abs(val)):
        raise AssertionError(f"index forms disagree: {val!r} vs {alt!r}")
    return val, alt


def jacobi_field_fn(sol: JacobiSolution, column: int = 0):
    """Field callable for :func:`index_form` from a propagated solution."""
    def fn(t):
        _, Y, W = sol(t)
        return Y[..., column], W[..., column]
    return fn


# Hessian of distance --------------------------------------------------------------

@dataclass(frozen=True)
class HessianResult:
    """Hessian of ``r_eps`` at the endpoint of an arc.

    ``matrix`` is the symmetric bilinear form in the frame ``(E_1, ..., E_n, S)``
    (frame coefficients, ``g``-normalized ``S``); ``on_matrix`` is the same
    form in the ``g_eps``-orthonormal parallel frame at the endpoint.
    """

    arc: GeodesicArc = field(repr=False)
    matrix: np.ndarray
    on_matrix: np.ndarray
    frame_end: np.ndarray = field(repr=False)
    asymmetry: float = 0.0
    singular_values: np.ndarray = field(default=None, repr=False)

    def __call__(self, v, w=None) -> float:
        v = np.asarray(v, dtype=float)
        w = v if w is None else np.asarray(w, dtype=float)
        return float(v @ self.matrix @ w)

    @property
    def lap_h(self) -> float:
        n = self.arc.model.n
        return float(np.trace(self.matrix[:n, :n]))

    @property
    def lap_v(self) -> float:
        return float(self.matrix[-1, -1])

    @property
    def lap_eps(self) -> float:
        return float(np.trace(self.on_matrix))


def hessian_from_arc(arc: GeodesicArc, curvature=None, cond_limit: float = 1e10) -> HessianResult:
    """Hessian of ``r_eps`` at ``arc.endpoint`` from the fundamental Jacobi matrix.

    With ``U``, ``U'`` the endpoint values of the fields ``Y(0)=0``,
    ``Y'(0)=e_j``, the Levi-Civita derivative is ``D_t Y = Y' + (1/2)D(g', Y)``
    with ``D = nabla^eps - hat nabla^eps``; the Hessian is
    ``(D_t U) U^{-1}`` restricted to the orthogonal complement of ``g'``.
    """
    M = arc.model
    eps = arc.eps
    d = M.dim
    sol = fundamental_solution(arc, curvature=curvature, samples=3)
    P, U, W = sol(arc.length)
    sv = np.linalg.svd(U, compute_uv=False)
    if sv[-1] <= sv[0] / cond_limit:
        raise ConjugatePointError("fundamental Jacobi matrix is singular at the endpoint", sv)
    G = metric_eps(d, eps)
    Dten = M.gamma_eps(eps) - M.gamma_hat(eps)
    a = arc.velocity_at(arc.length)
    y = P @ U
    corr = 0.5 * np.einsum("i,jc,ijm->mc", a, y, Dten)
    DU = W + P.T @ G @ corr
    H = np.linalg.solve(U.T, DU.T).T  # DU @ inv(U)
    gd = P.T @ G @ a
    Pi = np.eye(d) - np.outer(gd, gd)
    H = Pi @ H @ Pi
    asym = float(np.max(np.abs(H - H.T)))
    H = 0.5 * (H + H.T)
    # frame coefficients: u = P^T G v  ->  v^T (G P H P^T G) v
    L = G @ P
    Hf = L @ H @ L.T
    return HessianResult(arc=arc, matrix=Hf, on_matrix=H, frame_end=P, asymmetry=asym,
                         singular_values=sv)


def hessian_of_distance(M: ModelSpace, eps: float, x0, x, v=None, seed_count: int = 64,
                        hints=(), allow_ambiguous: bool = False):
    """Hessian of ``r_eps = d_eps(x0, .)`` at ``x``.

    Returns the :class:`HessianResult` or, with ``v`` (frame coefficients at
    ``x``), the value ``nabla^2 r_eps(v, v)``.

    Raises
    ------
    CutLocusError
        If the boundary problem reports more than one minimizer.
    ConjugatePointError
        If the fundamental matrix is singular at ``x``.
    """
    from .geodesics import solve_bvp
    if not eps > 0:
        raise ValueError("hessian_of_distance requires eps > 0")
    arc = solve_bvp(M, eps, x0, x, seed_count=seed_count, hints=hints, samples=8)
    if arc.ambiguous and not allow_ambiguous:
        raise CutLocusError("x is on the cut locus (several minimizers)")
    H = hessian_from_arc(arc)
    if v is None:
        return H
    return H(getattr(v, "coeffs", v))


class CutLocusError(RuntimeError):
    pass


def hessian_fd(M: ModelSpace, eps: float, x0, x, v, h: float = 2e-3, hints=()) -> float:
    """Second difference of ``r_eps`` along the ``g_eps`` geodesic from ``x`` with velocity ``v``.

    Five-point stencil on ``s -> d_eps(x0, exp_x(s v))``; each distance is
    a fresh boundary solve warm-started at the neighbouring solution.
    """
    from .geodesics import closed_exp, solve_bvp
    v = np.asarray(getattr(v, "coeffs", v), dtype=float)
    a0, p = v[:-1], v[-1] / eps
    vals = {}
    base = solve_bvp(M, eps, x0, x, hints=hints)
    hint = [np.append(*base.time_one_velocity())]
    for j in (-2, -1, 1, 2):
        xs = closed_exp(M, eps, x, a0 * j * h, p * j * h, 1.0)
        sol = solve_bvp(M, eps, x0, xs, hints=hint, seed_count=16)
        vals[j] = sol.length
    vals[0] = base.length
    return (-vals[2] + 16 * vals[1] - 30 * vals[0] + 16 * vals[-1] - vals[-2]) / (12 * h * h)


# conjugate points ------------------------------------------------------------------

def conjugate_locator(arc: GeodesicArc, curvature=None, grid: int = 400,
                      t_max: float | None = None, tol: float = 1e-6) -> list[float]:
    """Times where the fundamental fields ``Y(0) = 0`` become dependent.

    Candidates are local minima of ``sigma_min(U) / sigma_max(U)`` on a
    uniform grid. Odd-order zeros (sign change of ``det U``) are refined
    by Brent's root finder, even-order ones (the horizontal block is
    complex-like, so ``det U >= 0`` near them) by bounded minimisation.
    """
    if t_max is not None and t_max != arc.length:
        arc = _extended(arc, t_max)
    sol = fundamental_solution(arc, curvature=curvature, samples=3)
    r = arc.length
    ts = np.linspace(r / grid, r, grid)
    _, U, _ = sol(ts)
    det = np.linalg.det(U)
    sv = np.linalg.svd(U, compute_uv=False)
    q = sv[:, -1] / sv[:, 0]

    def ratio(t):
        s = np.linalg.svd(sol(t)[1], compute_uv=False)
        return float(s[-1] / s[0])

    out = []
    for i in range(1, len(ts) - 1):
        if not (q[i] <= q[i - 1] and q[i] <= q[i + 1]):
            continue
        if det[i - 1] * det[i] < 0 or det[i] * det[i + 1] < 0:
            j = i - 1 if det[i - 1] * det[i] < 0 else i
            f = lambda t: float(np.linalg.det(sol(t)[1]))
            t0 = brentq(f, ts[j], ts[j + 1], xtol=1e-13, rtol=1e-14)
        else:
            res = minimize_scalar(ratio, bounds=(ts[i - 1], ts[i + 1]), method="bounded",
                                  options={"xatol": 1e-12})
            t0 = res.x
            # sigma_min ~ c |t - t0| near an even-order zero: intersect the two secants
            h = 1e-6 * r
            ql, qll, qr, qrr = (ratio(t0 - h), ratio(t0 - 2 * h), ratio(t0 + h), ratio(t0 + 2 * h))
            sl, sr = (ql - qll) / h, (qrr - qr) / h
            if sl < 0 < sr:
                t0 = ((qr - sr * (t0 + h)) - (ql - sl * (t0 - h))) / (sl - sr)
        if ratio(t0) < tol and not any(abs(t0 - u) < 1e-9 for u in out):
            out.append(float(t0))
    return out


def _extended(arc: GeodesicArc, length: float) -> GeodesicArc:
    """Same geodesic with a different length (closed-form samples)."""
    from .geodesics import closed_exp
    M = arc.model
    s = np.linspace(0.0, length, 9)
    pts = closed_exp(M, arc.eps, arc.x0, arc.v0[:-1], arc.p, s)
    vel = closed_velocity(M, arc.eps, arc.v0[:-1], arc.p, s)
    return GeodesicArc(model=M, eps=arc.eps, x0=arc.x0, v0=arc.v0, length=length, lam=arc.lam,
                       p=arc.p, s=s, points=pts, velocities=vel, route="closed")


def unit_arc(M: ModelSpace, eps: float, v0, length: float, x0=None) -> GeodesicArc:
    """Closed-form unit-speed arc from ``x0`` (identity by default) with direction ``v0``."""
    v0 = np.asarray(getattr(v0, "coeffs", v0), dtype=float)
    G = metric_eps(M.dim, eps)
    v0 = v0 / math.sqrt(v0 @ G @ v0)
    x0 = M.backend.identity() if x0 is None else np.asarray(x0, dtype=float)
    base = GeodesicArc(model=M, eps=eps, x0=x0, v0=v0, length=0.0,
                       lam=float(v0[:-1] @ v0[:-1]), p=float(v0[-1] / eps))
    return _extended(base, length)
