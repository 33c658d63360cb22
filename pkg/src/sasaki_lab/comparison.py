"""Numerical verification of the Hessian and Laplacian comparison bounds.

Every check produces :class:`ComparisonRecord` objects.  A record compares a
measured quantity against a bound built from the scalar kernels;
``margin = bound - measured`` and an unflagged record passes when
``margin >= -tol``.  Samples on or near the cut locus, at conjugate points,
outside a kernel window, or with an unreliable extrapolation are flagged and
excluded from the verdict.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.stats import norm, qmc

from . import kernels
from .geodesics import (BvpError, GeodesicArc, MonotonicityError, closed_exp, distance,
                        left_reduce, richardson, solve_bvp)
from .jacobi import (ConjugatePointError, conjugate_locator, hessian_from_arc, unit_arc)
from .kernels import KernelDomainError
from .models import ModelKind, ModelSpace, model_from_name

DEFAULT_EPS_GRID = (1.0, 0.25, 0.0625, 0.015625)
SR_LEVELS = 7          # eps = 4^-k, k = 0..SR_LEVELS-1, for eps -> 0 claims
SR_ORDER = 3
EXTRAPOLATION_RTOL = 1e-4
ROUTE_RTOL = 1e-5
DEFAULT_WINDOWS = {"Heisenberg": 2.5, "HopfSphere": math.pi, "AntiDeSitter": 2.5}
SUITES = ("hessian", "laplacian", "vertical", "diameter", "injectivity", "limit")


class Quantity(str, Enum):
    HessRadial = "HessRadial"
    HessJ = "HessJ"
    HessPerp = "HessPerp"
    HessVertical = "HessVertical"
    HessH = "HessH"              # worst horizontal direction
    LapH = "LapH"
    LapV = "LapV"
    RouteGap = "RouteGap"        # |Jacobi trace - volume density route|
    Diameter = "Diameter"
    CutDistance = "CutDistance"
    Lambda = "Lambda"            # 1 - lambda_eps


def record_tol(bound: float) -> float:
    return 1e-6 * (1.0 + abs(bound)) if math.isfinite(bound) else 0.0


@dataclass(frozen=True)
class ComparisonRecord:
    """One measured value against one bound.

    ``check`` names the inequality (``case1``, ``refined``, ``sr4``, ...);
    ``flags`` lists the reasons a sample is excluded from the verdict.
    """

    model: str
    eps: float
    x0: tuple
    x: tuple
    r: float
    lam: float
    quantity: Quantity
    check: str
    measured: float
    bound: float
    flags: tuple = ()
    suite: str = ""

    @property
    def margin(self) -> float:
        return self.bound - self.measured

    @property
    def tol(self) -> float:
        return record_tol(self.bound)

    @property
    def flagged(self) -> bool:
        return bool(self.flags)

    @property
    def passed(self) -> bool:
        if self.flagged:
            return True
        return bool(self.margin >= -self.tol)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["quantity"] = self.quantity.value
        d["x0"] = list(self.x0)
        d["x"] = list(self.x)
        d["flags"] = list(self.flags)
        d["margin"] = self.margin
        d["tol"] = self.tol
        return d


def violations(records: Sequence[ComparisonRecord]) -> list[ComparisonRecord]:
    """Unflagged records with a margin below ``-tol``."""
    return [r for r in records if not r.passed]


def sort_records(records) -> list[ComparisonRecord]:
    return sorted(records, key=lambda r: (r.suite, r.model, -r.eps, r.check,
                                          r.quantity.value, r.x, r.r))


# constants of the foliation ---------------------------------------------------

@dataclass(frozen=True)
class FoliationBounds:
    """Constant curvature bounds ``rho1, rho2, rho3, kappa`` of a foliation."""

    rho1: float
    rho2: float
    rho3: float
    kappa: float
    n: int
    m: int = 1

    @classmethod
    def for_model(cls, M: ModelSpace) -> "FoliationBounds":
        rho1 = M.k1 + ((M.n - 2) * M.k2 if M.n > 2 else 0.0)
        return cls(rho1=float(rho1), rho2=M.n / 4.0, rho3=0.0, kappa=1.0, n=M.n, m=M.m)

    def K(self, eps: float, lam: float) -> float:
        """Effective constant curvature in the general horizontal bound."""
        return (self.rho1 - self.kappa / eps) * lam + self.rho2 * (1.0 - lam) / eps

    def kappa_eps(self, eps: float) -> float:
        return min(self.rho1 - self.kappa / eps, self.rho2 / eps)


def general_g_bound(n: int, K: float, r: float, G: Callable = None,
                    dG: Callable = None) -> float:
    """``(1/G(r)^2) int_0^r (n G'^2 - K G^2) ds`` for a weight with ``G(0) = 0``."""
    if G is None:
        return n / r - K * r / 3.0
    val, _ = integrate.quad(lambda s: n * dG(s) ** 2 - K * G(s) ** 2, 0.0, r,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return val / G(r) ** 2


def optimal_weight(n: int, K: float):
    """Weight ``G = phi_{-K/n}`` that turns the general bound into ``F``."""
    mu = -K / n

    def G(s):
        return kernels.kernel_bundle(mu, s).phi

    def dG(s):
        return kernels.kernel_bundle(mu, s).dphi

    return G, dG


def constant_rate(n: int, kappa: float, r: float) -> float:
    """``F(r) = sqrt(n k) cot(sqrt(k/n) r)`` and its flat and hyperbolic branches."""
    if kappa > 0:
        w = math.pi * math.sqrt(n / kappa)
        if r >= w:
            raise KernelDomainError("constant rate past its pole", w)
        return math.sqrt(n * kappa) / math.tan(math.sqrt(kappa / n) * r)
    if kappa < 0:
        return math.sqrt(-n * kappa) / math.tanh(math.sqrt(-kappa / n) * r)
    return n / r


def bmyers_diameter(fb: FoliationBounds, eps: float) -> float:
    """Diameter bound ``pi sqrt(n / kappa_eps)``; ``inf`` when ``kappa_eps <= 0``."""
    k = fb.kappa_eps(eps)
    return math.pi * math.sqrt(fb.n / k) if k > 0 else math.inf


def injectivity_bound(fb: FoliationBounds, eps: float) -> float:
    return math.pi * math.sqrt(fb.n * eps / fb.rho2)


def sasakian_eps_bound(M: ModelSpace, eps: float, lam: float, r: float) -> float:
    """Horizontal Laplacian bound for ``r_eps`` on a Sasakian model."""
    out = min(1.0, 1.0 / lam - 1.0) / r
    if M.n > 2:
        out += (M.n - 2) * kernels.f_rie(r, lam * M.k2)
    return out + kernels.eps_sas_rate(eps=eps, lam=lam, kappa=lam * M.k1, r=r)


def sasakian_limit_bound(M: ModelSpace, r: float) -> float:
    out = kernels.f_sas(r, M.k1)
    if M.n > 2:
        out += (M.n - 2) * kernels.f_rie(r, M.k2)
    return out


def leaf_bound(eps: float, r: float) -> float:
    """Horizontal Hessian bound at points of the leaf through ``x0``."""
    w = 2.0 * math.pi * math.sqrt(eps)
    if r >= w:
        raise KernelDomainError("leaf bound past its pole", w)
    s = 2.0 * math.sqrt(eps)
    return 1.0 / (s * math.tan(r / s))


def refined_form(M: ModelSpace, eps: float, lam: float, r: float, g) -> np.ndarray:
    """Quadratic form of the refined bound for nonnegative horizontal curvature.

    ``X -> |X|^2/r + <X, g>^2/r + c <JX, g>^2`` with
    ``c = r/(4 eps (1 + lam r^2/(12 eps)))`` and ``g`` the horizontal part
    of the unit velocity at ``x``.
    """
    n = M.n
    w = M.Jt[-1, :n, :n] @ g
    c = r / (4.0 * eps * (1.0 + lam * r * r / (12.0 * eps)))
    return np.eye(n) / r + np.outer(g, g) / r + c * np.outer(w, w)


# sampling ---------------------------------------------------------------------

@dataclass(frozen=True)
class SampleSpec:
    """Deterministic samples ``exp(r xi)`` with ``r`` in ``[r_min, frac*window]``.

    ``xi`` is a ``g_eps``-unit direction; both come from a scrambled Halton
    sequence with the given seed.
    """

    count: int = 16
    seed: int = 0
    r_min: float = 0.2
    frac: float = 0.9
    window: float | None = None
    seed_count: int = 64

    def window_for(self, M: ModelSpace) -> float:
        if self.window is not None:
            return self.window
        return DEFAULT_WINDOWS[M.kind.value]


def _halton(d: int, count: int, seed: int) -> np.ndarray:
    if count <= 0:
        return np.zeros((0, d))
    return qmc.Halton(d=d, scramble=True, seed=seed).random(count)


def _directions(u: np.ndarray) -> np.ndarray:
    z = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def sample_points(M: ModelSpace, eps: float, spec: SampleSpec):
    """Yield ``(x, hint)`` for ``eps > 0``; the hint is the time-one data."""
    W = spec.window_for(M)
    h = _halton(M.dim + 1, spec.count, spec.seed)
    rs = spec.r_min + h[:, 0] * (spec.frac * W - spec.r_min)
    xi = _directions(h[:, 1:])
    out = []
    x0 = M.backend.identity()
    for r, d in zip(rs, xi):
        a0 = r * d[:-1]
        p = r * d[-1] / math.sqrt(eps)
        x = closed_exp(M, eps, x0, a0, p, 1.0)
        out.append((x, np.append(a0, p)))
    return out


def sample_sr_points(M: ModelSpace, spec: SampleSpec, theta_frac: float = 0.95):
    """Sub-Riemannian samples: length ``r``, total rotation ``theta``.

    ``theta`` ranges over ``[-theta_frac 2 pi, theta_frac 2 pi]``; small
    ``|theta|`` gives nearly horizontal straight geodesics, where the
    horizontal Laplacian comes close to its bound.
    """
    W = spec.window_for(M)
    h = _halton(M.n + 2 if M.n > 2 else 3, spec.count, spec.seed)
    rs = spec.r_min + h[:, 0] * (spec.frac * W - spec.r_min)
    th = (2.0 * h[:, 1] - 1.0) * theta_frac * 2.0 * math.pi
    u = _directions(h[:, 2:]) if M.n > 2 else np.stack(
        [np.cos(2 * math.pi * h[:, 2]), np.sin(2 * math.pi * h[:, 2])], axis=-1)
    x0 = M.backend.identity()
    out = []
    for r, t, d in zip(rs, th, u):
        x = closed_exp(M, 0.0, x0, r * d, t, 1.0)
        out.append((x, np.append(r * d, t)))
    return out


def sample_leaf_points(M: ModelSpace, eps: float, count: int, frac: float = 0.9,
                       r_min: float = 0.05):
    """Points on the leaf through the identity at ``g_eps`` distances up to ``frac 2 pi sqrt(eps)``."""
    W = 2.0 * math.pi * math.sqrt(eps)
    x0 = M.backend.identity()
    out = []
    for j in range(count):
        s = r_min * W + (j + 0.5) / count * (frac - r_min) * W
        sign = 1.0 if j % 2 == 0 else -1.0
        p = sign * s / math.sqrt(eps)
        a0 = np.zeros(M.n)
        out.append((closed_exp(M, eps, x0, a0, p, 1.0), np.append(a0, p)))
    return out


# measurement ------------------------------------------------------------------

def _chart(M: ModelSpace, x) -> tuple:
    return tuple(float(v) for v in np.round(M.backend.to_chart(np.asarray(x, float)), 15))


@dataclass
class Measurement:
    """Hessian at a sample with its arc, or the reason it was skipped."""

    x: np.ndarray
    arc: GeodesicArc | None = None
    matrix: np.ndarray | None = None
    r: float = math.nan
    lam: float = math.nan
    g_end: np.ndarray | None = None
    flags: tuple = ()
    extra: dict = field(default_factory=dict)


def measure(M: ModelSpace, eps: float, x0, x, hints=(), seed_count: int = 64) -> Measurement:
    """Minimizing arc and Hessian of ``r_eps`` at ``x``, flagged on failure."""
    try:
        arc = solve_bvp(M, eps, x0, x, seed_count=seed_count, hints=hints, samples=8)
    except BvpError:
        return Measurement(x=x, flags=("bvp_failed",))
    if arc.ambiguous:
        return Measurement(x=x, arc=arc, r=arc.length, lam=arc.lam, flags=("cut_locus",))
    try:
        H = hessian_from_arc(arc)
    except ConjugatePointError:
        return Measurement(x=x, arc=arc, r=arc.length, lam=arc.lam, flags=("conjugate",))
    g = arc.velocity_at(arc.length)[:M.n]
    return Measurement(x=x, arc=arc, matrix=H.matrix, r=arc.length, lam=arc.lam, g_end=g,
                       extra={"lap_eps": H.lap_eps})


def sr_hessian(M: ModelSpace, x0, x, hints=(), levels: int = SR_LEVELS,
               seed_count: int = 64) -> Measurement:
    """Hessian of ``r_0`` by continuation in ``eps`` and Richardson extrapolation.

    The ladder is ``eps_k = eps_0 4^-k`` with ``eps_0 = min(1, r_0^2)``, where
    ``r_0`` comes from a direct sub-Riemannian shooting solve; the arc at
    each level seeds the next one.  Only the horizontal block and the
    vertical entry have a limit; the mixed entries of the returned matrix
    are ``nan``.
    """
    flags = []
    try:
        sr = solve_bvp(M, 0.0, x0, x, seed_count=seed_count, hints=hints)
    except BvpError:
        return Measurement(x=x, flags=("bvp_failed",))
    if sr.ambiguous:
        flags.append("cut_locus")
    eps0 = min(1.0, sr.length ** 2)
    epss = [eps0 * 4.0 ** (-k) for k in range(levels)]
    Ls, Hs = [], []
    hint = tuple(hints) + (np.append(*sr.time_one_velocity()),)
    for k, e in enumerate(epss):
        try:
            arc = solve_bvp(M, e, x0, x, seed_count=seed_count if k == 0 else 0,
                            hints=hint, samples=8)
        except BvpError:
            return Measurement(x=x, r=sr.length, flags=("bvp_failed",))
        if arc.ambiguous:
            return Measurement(x=x, r=arc.length, flags=("cut_locus",))
        try:
            H = hessian_from_arc(arc)
        except ConjugatePointError:
            return Measurement(x=x, r=arc.length, flags=("conjugate",))
        Ls.append(arc.length)
        Hs.append(H.matrix)
        hint = (np.append(*arc.time_one_velocity()),) + tuple(hints)
    Ls = np.array(Ls)
    if np.any(np.diff(Ls) < -1e-9 * Ls[:-1]):
        flags.append("extrapolation")
    Lt = richardson(Ls, 4.0, order=SR_ORDER)
    Ht = richardson(np.stack(Hs), 4.0, order=SR_ORDER)
    r0 = float(Lt[-1][-1])
    # mixed H-V entries carry a 1/eps connection term and have no limit
    mixed = np.zeros((M.dim, M.dim), dtype=bool)
    mixed[:M.n, -1] = mixed[-1, :M.n] = True
    H0 = np.where(mixed, np.nan, Ht[-1][-1])
    delta = float(np.max(np.abs(Ht[-1][-1] - Ht[-2][-1])[~mixed]))
    if delta > EXTRAPOLATION_RTOL * (1.0 + float(np.nanmax(np.abs(H0)))):
        flags.append("extrapolation")
    if abs(sr.length - r0) > 1e-6 * r0:
        flags.append("extrapolation")
    g = sr.velocity_at(sr.length)[:M.n]
    return Measurement(x=x, matrix=H0, r=r0, lam=1.0, g_end=g, flags=tuple(sorted(set(flags))),
                       extra={"lengths": Ls.tolist(), "eps_grid": epss, "hessian_delta": delta,
                              "sr_length": sr.length})


# volume density route -----------------------------------------------------------

def _on_coords(M: ModelSpace, eps: float, y, pts) -> np.ndarray:
    """``g_eps``-orthonormal left-invariant coordinates of ``y^{-1} pts`` (to first order exact)."""
    B = M.backend
    rel = left_reduce(M, np.broadcast_to(y, np.shape(pts)), pts)
    c = B.to_chart(rel) @ B.coframe(np.zeros(M.dim))
    c[..., -1] /= math.sqrt(eps)
    return c


def density_laplacian(M: ModelSpace, eps: float, x0, arc: GeodesicArc,
                      delta: float = 1e-4, hs: float = 1e-3) -> float:
    """``d/dr log A(r, xi)`` for the exponential map volume density.

    ``A(s, xi) = s^{N-1} |det D exp_{x0}(s xi)|`` with the differential taken
    in left-invariant orthonormal coordinates at both ends.  The radial step
    is ``hs * min(r, 1/|value|)`` so that it stays small against the distance
    to a nearby zero of ``A``.
    """
    r = arc.length
    val = _density_log_derivative(M, eps, x0, arc, delta, hs * r)
    h = hs * min(r, 1.0 / max(abs(val), 1e-300))
    if h < 0.5 * hs * r:
        val = _density_log_derivative(M, eps, x0, arc, delta, h)
    return val


def _density_log_derivative(M, eps, x0, arc, delta, h):
    N = M.dim
    r = arc.length
    a0, pt = arc.time_one_velocity()
    xi = np.append(a0, math.sqrt(eps) * pt) / r
    svals = r + h * np.array([-2.0, -1.0, 1.0, 2.0])
    steps = delta * np.array([-2.0, -1.0, 1.0, 2.0])
    wts = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * delta)
    E = np.eye(N)
    # evaluation points indexed by (s, direction, step)
    W = (svals[:, None, None, None] * xi + steps[None, None, :, None] * E[None, :, None, :])
    W = np.broadcast_to(W, (4, N, 4, N)).reshape(-1, N)
    pts = closed_exp(M, eps, x0, W[:, :M.n], W[:, M.n] / math.sqrt(eps), 1.0)
    Y = closed_exp(M, eps, x0, np.outer(svals, xi[:M.n]), svals * xi[M.n] / math.sqrt(eps), 1.0)
    pts = np.asarray(pts).reshape((4, N, 4) + np.shape(pts)[1:])
    logA = np.empty(4)
    for k in range(4):
        c = _on_coords(M, eps, Y[k], pts[k].reshape((N * 4,) + pts.shape[3:]))
        c = c.reshape(N, 4, N)
        D = np.einsum("s,jsi->ij", wts, c)
        logA[k] = (N - 1) * math.log(svals[k]) + math.log(abs(np.linalg.det(D)))
    return float((logA[0] - 8 * logA[1] + 8 * logA[2] - logA[3]) / (12.0 * h))


def laplacians_of_distance(M: ModelSpace, eps: float, x0, x, hints=(), seed_count: int = 64,
                           route_check: bool = True) -> dict:
    """``Delta_H r_eps`` and ``Delta_V r_eps`` at ``x`` with the volume-density cross-check.

    Returns
    -------
    dict
        ``lap_h``, ``lap_v`` (vertical entry for the ``g``-unit Reeb field),
        ``lap_eps = lap_h + eps lap_v``, ``density`` (the density route),
        ``r``, ``lam`` and ``flags``.
    """
    if not eps > 0:
        raise ValueError("laplacians_of_distance requires eps > 0")
    m = measure(M, eps, x0, x, hints=hints, seed_count=seed_count)
    out = {"r": m.r, "lam": m.lam, "flags": m.flags, "lap_h": math.nan, "lap_v": math.nan,
           "lap_eps": math.nan, "density": math.nan}
    if m.flags:
        return out
    n = M.n
    out["lap_h"] = float(np.trace(m.matrix[:n, :n]))
    out["lap_v"] = float(m.matrix[-1, -1])
    out["lap_eps"] = out["lap_h"] + eps * out["lap_v"]
    if route_check:
        out["density"] = density_laplacian(M, eps, x0, m.arc)
    return out


# record construction ------------------------------------------------------------

def _rec(M, eps, x0c, m: Measurement, q, check, measured, bound, suite, flags=()):
    fl = tuple(sorted(set(m.flags) | set(flags)))
    return ComparisonRecord(model=M.name, eps=float(eps), x0=x0c, x=_chart(M, m.x),
                            r=float(m.r), lam=float(m.lam), quantity=q, check=check,
                            measured=float(measured), bound=float(bound), flags=fl,
                            suite=suite)


def _bounded(fn, *args):
    try:
        return fn(*args), ()
    except KernelDomainError:
        return math.nan, ("window",)
    except ValueError:
        return math.nan, ("window",)


def hessian_records(M: ModelSpace, eps: float, x0, m: Measurement) -> list[ComparisonRecord]:
    """Horizontal Hessian checks at one generic ``eps > 0`` sample."""
    x0c = _chart(M, x0)
    n = M.n
    out = []
    nan = math.nan
    if m.flags:
        checks = [("case1", Quantity.HessRadial), ("case2", Quantity.HessJ)]
        if n > 2:
            checks.append(("case3", Quantity.HessPerp))
        if M.k1 >= 0:
            checks.append(("refined", Quantity.HessH))
        return [_rec(M, eps, x0c, m, q, c, nan, nan, "hessian") for c, q in checks]
    H = m.matrix
    Hh = H[:n, :n]
    g = m.g_end
    lam, r = m.lam, m.r
    out.append(_rec(M, eps, x0c, m, Quantity.HessRadial, "case1", g @ Hh @ g,
                    min(lam, 1.0 - lam) / r, "hessian"))
    if lam > 1e-10:
        u = M.Jt[-1, :n, :n].T @ g / math.sqrt(lam)
        b, fl = _bounded(lambda: kernels.eps_sas_rate(eps=eps, lam=min(lam, 1.0),
                                                      kappa=lam * M.k1, r=r))
        out.append(_rec(M, eps, x0c, m, Quantity.HessJ, "case2", u @ Hh @ u, b, "hessian", fl))
        if n > 2:
            # orthogonal complement of span{g, Jg} in the horizontal space
            Q, _ = np.linalg.qr(np.column_stack([g, u, np.eye(n)]))
            P = Q[:, 2:n]
            top = float(np.max(np.linalg.eigvalsh(P.T @ Hh @ P)))
            b, fl = _bounded(kernels.f_rie, r, lam * M.k2)
            out.append(_rec(M, eps, x0c, m, Quantity.HessPerp, "case3", top, b, "hessian", fl))
    if M.k1 >= 0:
        Bq = refined_form(M, eps, lam, r, g)
        vals, vecs = np.linalg.eigh(Bq - Hh)
        X = vecs[:, 0]
        out.append(_rec(M, eps, x0c, m, Quantity.HessH, "refined", X @ Hh @ X, X @ Bq @ X,
                        "hessian"))
    return out


def leaf_records(M: ModelSpace, eps: float, x0, m: Measurement) -> list[ComparisonRecord]:
    x0c = _chart(M, x0)
    n = M.n
    if not m.flags and m.lam > 1e-10:
        m = Measurement(x=m.x, r=m.r, lam=m.lam, flags=("off_leaf",))
    if m.flags:
        return [_rec(M, eps, x0c, m, Quantity.HessH, "case4", math.nan, math.nan, "hessian")]
    top = float(np.max(np.linalg.eigvalsh(m.matrix[:n, :n])))
    b, fl = _bounded(leaf_bound, eps, m.r)
    return [_rec(M, eps, x0c, m, Quantity.HessH, "case4", top, b, "hessian", fl)]


def vertical_records(M: ModelSpace, eps: float, x0, m: Measurement,
                     fb: FoliationBounds) -> list[ComparisonRecord]:
    x0c = _chart(M, x0)
    if m.flags:
        return [_rec(M, eps, x0c, m, Quantity.HessVertical, "vertical_hessian", math.nan,
                     math.nan, "vertical"),
                _rec(M, eps, x0c, m, Quantity.LapV, "vertical_comparison", math.nan,
                     math.nan, "vertical")]
    hv = float(m.matrix[-1, -1])
    b, fl = _bounded(kernels.xi, eps, m.lam * M.k1, m.r)
    out = [_rec(M, eps, x0c, m, Quantity.HessVertical, "vertical_hessian", hv, b,
                "vertical", fl)]
    bv = fb.m / (eps * m.r) - fb.rho3 * (1.0 - m.lam) * m.r / 3.0
    out.append(_rec(M, eps, x0c, m, Quantity.LapV, "vertical_comparison", hv, bv, "vertical"))
    return out


def laplacian_records(M: ModelSpace, eps: float, x0, m: Measurement, fb: FoliationBounds,
                      G=None, dG=None, density: float | None = None) -> list[ComparisonRecord]:
    x0c = _chart(M, x0)
    names = ["comparison1", "constant2", "sasakian_eps"]
    if m.flags:
        out = [_rec(M, eps, x0c, m, Quantity.LapH, c, math.nan, math.nan, "laplacian")
               for c in names]
        if density is not None:
            out.append(_rec(M, eps, x0c, m, Quantity.RouteGap, "density_route", math.nan,
                            math.nan, "laplacian"))
        return out
    n = M.n
    lap_h = float(np.trace(m.matrix[:n, :n]))
    lam, r = m.lam, m.r
    out = []
    b1 = general_g_bound(n, fb.K(eps, lam), r, G, dG)
    out.append(_rec(M, eps, x0c, m, Quantity.LapH, "comparison1", lap_h, b1, "laplacian"))
    b2, fl = _bounded(constant_rate, n, fb.kappa_eps(eps), r)
    out.append(_rec(M, eps, x0c, m, Quantity.LapH, "constant2", lap_h, b2, "laplacian", fl))
    if lam > 1e-10:
        b3, fl = _bounded(lambda: sasakian_eps_bound(M, eps, min(lam, 1.0), r))
        out.append(_rec(M, eps, x0c, m, Quantity.LapH, "sasakian_eps", lap_h, b3,
                        "laplacian", fl))
    if density is not None:
        lap_eps = m.extra["lap_eps"]
        gap = abs(density - lap_eps)
        out.append(_rec(M, eps, x0c, m, Quantity.RouteGap, "density_route", gap,
                        ROUTE_RTOL * (1.0 + abs(lap_eps)), "laplacian"))
    return out


def sr_records(M: ModelSpace, x0, m: Measurement, suites) -> list[ComparisonRecord]:
    """Checks at ``eps = 0`` on an extrapolated Hessian of ``r_0``."""
    x0c = _chart(M, x0)
    n = M.n
    out = []
    ok = not m.flags
    Hh = m.matrix[:n, :n] if ok else None
    if "hessian" in suites and M.k1 >= 0:
        val = float(np.max(np.linalg.eigvalsh(Hh))) if ok else math.nan
        out.append(_rec(M, 0.0, x0c, m, Quantity.HessH, "sr4", val,
                        4.0 / m.r if ok else math.nan, "hessian"))
    if "laplacian" in suites:
        val = float(np.trace(Hh)) if ok else math.nan
        b, fl = _bounded(sasakian_limit_bound, M, m.r) if ok else (math.nan, ())
        out.append(_rec(M, 0.0, x0c, m, Quantity.LapH, "sasakian_limit", val, b,
                        "laplacian", fl))
    if "vertical" in suites:
        val = float(m.matrix[-1, -1]) if ok else math.nan
        b, fl = _bounded(kernels.xi, 0.0, M.k1, m.r) if ok else (math.nan, ())
        out.append(_rec(M, 0.0, x0c, m, Quantity.LapV, "sr_vertical", val, b, "vertical", fl))
    return out


# tasks --------------------------------------------------------------------------

def _identity_task(args):
    """Picklable unit of work: ``(model name, eps, kind, x, hint, options)``."""
    name, eps, kind, x, hint, opts = args
    M = model_from_name(name)
    x0 = M.backend.identity()
    suites = opts.get("suites", SUITES)
    sc = opts.get("seed_count", 64)
    fb = FoliationBounds.for_model(M)
    if kind == "sr":
        m = sr_hessian(M, x0, x, hints=(hint,), seed_count=sc)
        return sr_records(M, x0, m, suites)
    m = measure(M, eps, x0, x, hints=(hint,), seed_count=sc)
    if kind == "leaf":
        return leaf_records(M, eps, x0, m)
    out = []
    if "hessian" in suites:
        out += hessian_records(M, eps, x0, m)
    if "vertical" in suites:
        out += vertical_records(M, eps, x0, m, fb)
    if "laplacian" in suites:
        dens = None
        if opts.get("route_check", True):
            dens = math.nan if m.flags else density_laplacian(M, eps, x0, m.arc)
        out += laplacian_records(M, eps, x0, m, fb, density=dens)
    return out


def _run(tasks, mapper):
    out = []
    for recs in mapper(_identity_task, tasks):
        out.extend(recs)
    return sort_records(out)


def _tasks(M, eps, spec, kind, suites, route_check=True):
    opts = {"suites": tuple(suites), "seed_count": spec.seed_count, "route_check": route_check}
    if kind == "generic":
        pts = sample_points(M, eps, spec)
    elif kind == "leaf":
        pts = sample_leaf_points(M, eps, max(2, spec.count // 4))
    else:
        pts = sample_sr_points(M, spec)
    return [(M.name, float(eps), kind, x, h, opts) for x, h in pts]


def verify_hessian_bounds(M: ModelSpace, eps: float, x0=None, spec: SampleSpec = SampleSpec(),
                          mapper=map) -> list[ComparisonRecord]:
    """Horizontal and vertical Hessian bounds at the samples of ``spec``.

    ``eps > 0`` runs the four horizontal cases (case 4 on leaf points), the
    vertical bound and, on models with nonnegative horizontal curvature,
    the refined bound.  ``eps = 0`` checks ``nabla_H^2 r_0 <= 4/r_0`` on
    extrapolated Hessians.
    """
    _check_base(M, x0)
    if eps == 0:
        return _run(_tasks(M, 0.0, spec, "sr", ("hessian",)), mapper)
    tasks = _tasks(M, eps, spec, "generic", ("hessian",)) + _tasks(M, eps, spec, "leaf", ())
    return _run(tasks, mapper)


def verify_vertical_bounds(M: ModelSpace, eps: float, x0=None, spec: SampleSpec = SampleSpec(),
                           mapper=map) -> list[ComparisonRecord]:
    _check_base(M, x0)
    if eps == 0:
        return _run(_tasks(M, 0.0, spec, "sr", ("vertical",)), mapper)
    return _run(_tasks(M, eps, spec, "generic", ("vertical",)), mapper)


def verify_laplacian_bounds(M: ModelSpace, eps: float, x0=None, spec: SampleSpec = SampleSpec(),
                            G=None, dG=None, mapper=map,
                            route_check: bool = True) -> list[ComparisonRecord]:
    """Horizontal Laplacian bounds; ``G`` is the weight of the general bound.

    With a user weight the samples are processed serially, since the weight
    need not be picklable.
    """
    _check_base(M, x0)
    if eps == 0:
        return _run(_tasks(M, 0.0, spec, "sr", ("laplacian",)), mapper)
    if G is None:
        return _run(_tasks(M, eps, spec, "generic", ("laplacian",), route_check), mapper)
    fb = FoliationBounds.for_model(M)
    x0 = M.backend.identity()
    out = []
    for x, h in sample_points(M, eps, spec):
        m = measure(M, eps, x0, x, hints=(h,), seed_count=spec.seed_count)
        dens = None
        if route_check:
            dens = math.nan if m.flags else density_laplacian(M, eps, x0, m.arc)
        out += laplacian_records(M, eps, x0, m, fb, G=G, dG=dG, density=dens)
    return sort_records(out)


def _check_base(M, x0):
    # the models are homogeneous; every check runs from the identity
    if x0 is not None and not np.allclose(np.asarray(x0, float), M.backend.identity()):
        raise ValueError("comparison checks run from the identity; left-translate the sample")


# global checks ------------------------------------------------------------------

@dataclass
class DiameterScan:
    estimate: float
    argmax: tuple | None
    eps_estimates: dict
    records: list


def _sphere_points(count: int, seed: int) -> np.ndarray:
    h = _halton(3, count, seed)
    u1, u2, u3 = h.T
    return np.stack([np.sqrt(u1) * np.cos(2 * np.pi * u3),
                     np.sqrt(1 - u1) * np.sin(2 * np.pi * u2),
                     np.sqrt(1 - u1) * np.cos(2 * np.pi * u2),
                     np.sqrt(u1) * np.sin(2 * np.pi * u3)], axis=-1)


def _far_search(M, eps, pts, refine: int, seed_count: int, maxfev: int):
    """Largest ``d_eps(e, q)`` over ``pts``, refined by Nelder-Mead from the best candidates.

    Shooting can miss the shortest of several nearby geodesics and then
    overestimate the distance; the maximizer exploits such misses, so the
    refinement uses four times the seeds and the final value is re-measured
    (by continuation for ``eps = 0``).
    """
    B = M.backend
    e = B.identity()

    def length(q, sc):
        try:
            return solve_bvp(M, eps, e, q, seed_count=sc, samples=2).length
        except (BvpError, ValueError):
            return math.nan

    L = np.array([length(q, seed_count) for q in pts])
    order = np.argsort(np.where(np.isnan(L), -np.inf, -L), kind="stable")
    cands = [(float(L[i]), pts[i]) for i in order[:max(refine, 1)]]
    for i in order[:refine]:
        c0 = B.to_chart(pts[i])

        def f(c):
            v = length(B.from_chart(c), 4 * seed_count)
            return -v if math.isfinite(v) else 0.0

        res = optimize.minimize(f, c0, method="Nelder-Mead",
                                options={"maxfev": maxfev, "xatol": 1e-6, "fatol": 1e-10,
                                         "initial_simplex": c0 + np.vstack(
                                             [np.zeros(3), 0.1 * np.eye(3)])})
        cands.append((float(-res.fun), B.from_chart(res.x)))
    best, arg = -math.inf, None
    for v, q in cands:
        check = [v, length(q, 4 * seed_count)]
        if eps == 0:
            try:
                check.append(distance(M, 0.0, e, q, seed_count=seed_count).length)
            except (BvpError, MonotonicityError):
                pass
        v = float(np.nanmin(check))
        if v > best:
            best, arg = v, q
    return best, arg


def diameter_scan(M: ModelSpace, count: int = 64, seed: int = 0, refine: int = 3,
                  eps_grid: Sequence[float] = (1.0, 0.5), seed_count: int = 64,
                  maxfev: int = 60) -> DiameterScan:
    """Sub-Riemannian diameter estimate and the diameter bounds.

    The estimate is the largest ``r_0`` over a quasi-uniform sample of the
    sphere, refined by local maximization from the best candidates.  On
    non-compact models the estimate is ``inf`` and the bounds are vacuous.
    """
    fb = FoliationBounds.for_model(M)
    recs = []
    x0c = _chart(M, M.backend.identity())
    if M.kind is not ModelKind.HOPF or M.n != 2:
        rec = ComparisonRecord(model=M.name, eps=0.0, x0=x0c, x=(), r=math.inf, lam=1.0,
                               quantity=Quantity.Diameter, check="sr_bonnet_myers",
                               measured=math.nan, bound=math.inf, flags=("noncompact",),
                               suite="diameter")
        return DiameterScan(math.inf, None, {}, [rec])
    pts = _sphere_points(count, seed)
    est, arg = _far_search(M, 0.0, pts, refine, seed_count, maxfev)
    argc = _chart(M, arg)
    b = 2.0 * math.pi / math.sqrt(M.k1) if M.k1 > 0 else math.inf
    recs.append(ComparisonRecord(model=M.name, eps=0.0, x0=x0c, x=argc, r=est, lam=1.0,
                                 quantity=Quantity.Diameter, check="sr_bonnet_myers",
                                 measured=est, bound=b, suite="diameter"))
    if M.n > 2 and M.k2 > 0:
        recs.append(ComparisonRecord(model=M.name, eps=0.0, x0=x0c, x=argc, r=est, lam=1.0,
                                     quantity=Quantity.Diameter, check="sr_bonnet_myers_k2",
                                     measured=est, bound=math.pi / math.sqrt(M.k2),
                                     suite="diameter"))
    eps_est = {}
    for e in eps_grid:
        if not e > fb.kappa / fb.rho1:
            continue
        de, arge = _far_search(M, e, pts, 1, seed_count, maxfev // 2)
        eps_est[float(e)] = de
        recs.append(ComparisonRecord(model=M.name, eps=float(e), x0=x0c, x=_chart(M, arge),
                                     r=de, lam=math.nan, quantity=Quantity.Diameter,
                                     check="bmyers", measured=de,
                                     bound=bmyers_diameter(fb, e), suite="diameter"))
    return DiameterScan(est, argc, eps_est, recs)


@dataclass
class InjectivityResult:
    eps: float
    detected: float
    conjugate: float
    loss: float
    record: ComparisonRecord


def injectivity_probe(M: ModelSpace, eps: float, grid: int = 24, seed_count: int = 32,
                      tol: float = 1e-9) -> InjectivityResult:
    """Leafwise cut distance along the vertical geodesic through the identity.

    The detected distance is the first conjugate time or the first arc
    length where the vertical arc stops being the unique minimizer,
    whichever comes first.
    """
    if not eps > 0:
        raise ValueError("injectivity_probe requires eps > 0")
    fb = FoliationBounds.for_model(M)
    bound = injectivity_bound(fb, eps)
    x0 = M.backend.identity()
    s_max = 1.25 * bound
    v0 = np.zeros(M.dim)
    v0[-1] = math.sqrt(eps)          # g_eps-unit vertical velocity, frame coefficients
    arc = unit_arc(M, eps, v0, s_max, x0=x0)
    conj = conjugate_locator(arc, grid=400)
    t_conj = conj[0] if conj else math.inf

    def lost(s):
        x = closed_exp(M, eps, x0, np.zeros(M.n), s / math.sqrt(eps), 1.0)
        hint = np.append(np.zeros(M.n), s / math.sqrt(eps))
        try:
            a = solve_bvp(M, eps, x0, x, seed_count=seed_count, hints=(hint,), samples=2)
        except BvpError:
            return True
        return a.ambiguous or a.length < s * (1.0 - 1e-8)

    top = min(t_conj, s_max)
    ss = np.linspace(top / grid, top, grid)
    loss = math.inf
    prev = 0.0
    for s in ss:
        if s >= t_conj * (1.0 - 1e-9):
            break
        if lost(s):
            lo, hi = prev, s
            while hi - lo > tol * hi:
                mid = 0.5 * (lo + hi)
                if lost(mid):
                    hi = mid
                else:
                    lo = mid
            loss = hi
            break
        prev = s
    det = min(loss, t_conj)
    x0c = _chart(M, x0)
    flags = () if math.isfinite(det) else ("not_detected",)
    rec = ComparisonRecord(model=M.name, eps=float(eps), x0=x0c, x=(), r=det, lam=0.0,
                           quantity=Quantity.CutDistance, check="injectivity", measured=det,
                           bound=bound, flags=flags, suite="injectivity")
    return InjectivityResult(float(eps), det, t_conj, loss, rec)


LAMBDA_N = (1, 2, 4, 8, 16, 32, 64)


def lambda_limit_points(count: int = 20) -> np.ndarray:
    """Fixed off-leaf chart points ``(rho cos t, rho sin t, z)`` with ``|z| <= 0.05 rho^2``."""
    j = np.arange(count)
    rho = 1.0 + j / max(count - 1, 1)
    t = 2.0 * math.pi * ((j * 0.6180339887498949) % 1.0)
    z = 0.05 * rho ** 2 * np.cos(3.0 * j + 0.5)
    return np.stack([rho * np.cos(t), rho * np.sin(t), z], axis=-1)


def lambda_limit(M: ModelSpace, points=None, ns=LAMBDA_N, seed_count: int = 64,
                 target: float = 1e-2,
                 monotone_from: int = 16) -> tuple[list[ComparisonRecord], np.ndarray]:
    """``lambda_{1/n}`` at fixed points; returns records and the ``lambda`` table.

    Each record compares ``1 - lambda_{1/64}`` with ``target``; a second
    record per point checks that ``lambda`` does not decrease from
    ``n = monotone_from`` on.  It is not monotone for small ``n``: at
    distance 1 to 2 it dips by about ``2e-3`` near ``n = 8`` before rising.
    """
    if M.dim != 3:
        raise ValueError("lambda_limit points are three-dimensional charts")
    pts = lambda_limit_points() if points is None else np.asarray(points, float)
    B = M.backend
    x0 = B.identity()
    table = np.empty((len(pts), len(ns)))
    recs = []
    for i, c in enumerate(pts):
        x = B.from_chart(c)
        hint = ()
        flags = []
        for j, nn in enumerate(ns):
            try:
                arc = solve_bvp(M, 1.0 / nn, x0, x, seed_count=seed_count if j == 0 else 8,
                                hints=hint, samples=2)
            except BvpError:
                flags.append("bvp_failed")
                table[i, j:] = math.nan
                break
            if arc.ambiguous:
                flags.append("cut_locus")
            table[i, j] = arc.lam
            hint = (np.append(*arc.time_one_velocity()),)
        xc = tuple(float(v) for v in np.round(c, 15))
        fl = tuple(sorted(set(flags)))
        recs.append(ComparisonRecord(model=M.name, eps=1.0 / ns[-1], x0=_chart(M, x0), x=xc,
                                     r=math.nan, lam=float(table[i, -1]),
                                     quantity=Quantity.Lambda, check="lambda_limit",
                                     measured=float(1.0 - table[i, -1]), bound=target,
                                     flags=fl, suite="limit"))
        k0 = int(np.searchsorted(ns, monotone_from))
        tail = table[i, k0:]
        drop = float(np.max(tail[:-1] - tail[1:])) if tail.size > 1 else 0.0
        recs.append(ComparisonRecord(model=M.name, eps=1.0 / ns[-1], x0=_chart(M, x0), x=xc,
                                     r=math.nan, lam=float(table[i, -1]),
                                     quantity=Quantity.Lambda, check="lambda_monotone",
                                     measured=drop, bound=0.0, flags=fl, suite="limit"))
    return sort_records(recs), table


# suites -------------------------------------------------------------------------

SAMPLED_SUITES = ("hessian", "laplacian", "vertical")
ALL_SUITES = ("hessian", "laplacian", "vertical", "diameter", "injectivity")


def expand_suites(selection) -> tuple:
    """Normalize a suite selection; ``all`` is every suite except ``limit``."""
    if isinstance(selection, str):
        selection = [selection]
    out = []
    for s in selection:
        for t in (ALL_SUITES if s == "all" else (s,)):
            if t not in SUITES:
                raise ValueError(f"unknown suite {t!r}; choose from {SUITES + ('all',)}")
            if t not in out:
                out.append(t)
    return tuple(out)


def run_suites(M: ModelSpace, suites="all", eps_grid=DEFAULT_EPS_GRID,
               spec: SampleSpec = SampleSpec(), mapper=map) -> list[ComparisonRecord]:
    """Records of the selected suites over an ``eps`` grid.

    ``0`` in the grid adds the sub-Riemannian checks.  The sampled suites
    share one measurement per sample.
    """
    suites = expand_suites(suites)
    sampled = tuple(s for s in suites if s in SAMPLED_SUITES)
    tasks = []
    for e in eps_grid:
        e = float(e)
        if not sampled:
            break
        if e == 0:
            tasks += _tasks(M, 0.0, spec, "sr", sampled)
            continue
        tasks += _tasks(M, e, spec, "generic", sampled)
        if "hessian" in sampled:
            tasks += _tasks(M, e, spec, "leaf", ())
    out = _run(tasks, mapper)
    if "diameter" in suites:
        out += diameter_scan(M, seed=spec.seed).records
    if "injectivity" in suites:
        out += [injectivity_probe(M, float(e)).record for e in eps_grid if e > 0]
    if "limit" in suites and M.dim == 3:
        out += lambda_limit(M)[0]
    return sort_records(out)
