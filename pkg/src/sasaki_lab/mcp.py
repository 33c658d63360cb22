"""Geodesic contraction and the measure contraction property.

Orientation
-----------
``contract(M, eps, x0, x, t)`` follows the minimizing geodesic from ``x``
to ``x0``: ``t = 0`` returns ``x`` and ``t = 1`` returns ``x0``.  The MCP
inequality reads ``nu(phi_t(U)) >= (1 - t)^N nu(U)``.

The density bound is stated along the geodesic from ``x0``: with
``s = 1 - t`` the fraction of the arc kept, the Jacobian of ``x -> phi_t(x)``
is ``s A(s r, xi)/A(r, xi)`` and is bounded below by
``s Theta(lam, s r)/Theta(lam, r)``.

``nu`` is the Riemannian volume of ``g`` (Haar measure).  The rescaling of
the volume by a power of ``eps`` does not change any ratio computed here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from . import kernels
from .geodesics import BvpError, closed_exp, left_reduce, solve_bvp
from .jacobi import CutLocusError
from .kernels import KernelDomainError
from .models import ModelSpace, model_from_name

TARGET_REL_ERROR = 5e-3
MAX_SAMPLES = 20000
FD_STEP = 1e-4


class SampleStarvation(RuntimeError):
    """The Monte Carlo relative error target was not met within the sample cap."""


@dataclass(frozen=True)
class Region:
    """Axis-aligned box in chart coordinates."""

    center: tuple
    half_widths: tuple

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - np.asarray(self.half_widths)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center) + np.asarray(self.half_widths)

    @property
    def chart_volume(self) -> float:
        return float(np.prod(2.0 * np.asarray(self.half_widths)))


@dataclass
class McpProbe:
    model: str
    eps: float
    x0: tuple
    region: Region
    t: float
    samples: int
    ratio: float
    stderr: float
    factor: float           # (1 - t)^N
    N: int
    exponent: float         # log(ratio)/log(1 - t)
    skipped: int = 0

    @property
    def violated(self) -> bool:
        return self.ratio < self.factor - 3.0 * self.stderr

    def as_dict(self) -> dict:
        return {"model": self.model, "eps": self.eps, "x0": list(self.x0),
                "center": list(self.region.center), "half_widths": list(self.region.half_widths),
                "t": self.t, "samples": self.samples, "ratio": self.ratio,
                "stderr": self.stderr, "factor": self.factor, "N": self.N,
                "exponent": self.exponent, "skipped": self.skipped,
                "violated": self.violated}


# contraction -------------------------------------------------------------------

def _arc(M, eps, x0, x, seed_count=64, hints=()):
    arc = solve_bvp(M, eps, x0, x, seed_count=seed_count, hints=hints, samples=2)
    if arc.ambiguous:
        raise CutLocusError("several minimizing geodesics from x0 to x")
    return arc


def contract(M: ModelSpace, eps: float, x0, x, t: float, seed_count: int = 64,
             hints=()) -> np.ndarray:
    """Chart point at parameter ``t`` of the minimizing geodesic from ``x`` to ``x0``.

    Raises
    ------
    CutLocusError
        If ``x`` is joined to ``x0`` by several minimizing geodesics.
    """
    B = M.backend
    x0a = B.from_chart(np.asarray(x0, float))
    xa = B.from_chart(np.asarray(x, float))
    if t == 0.0:
        return np.asarray(x, float).copy()
    if t == 1.0 or np.allclose(x0a, xa, atol=1e-14, rtol=0):
        return np.asarray(x0, float).copy()
    arc = _arc(M, eps, x0a, xa, seed_count, hints)
    a0, pt = arc.time_one_velocity()
    return B.to_chart(closed_exp(M, eps, x0a, a0, pt, 1.0 - t))


def _frame_coords(M: ModelSpace, y, pts) -> np.ndarray:
    """Frame coefficients of ``y^{-1} pts`` (exact to first order near ``y``)."""
    B = M.backend
    rel = left_reduce(M, np.broadcast_to(y, np.shape(pts)), pts)
    return B.to_chart(rel) @ B.coframe(np.zeros(M.dim))


def _log_det_exp(M: ModelSpace, eps: float, x0, W: np.ndarray, delta: float = FD_STEP) -> np.ndarray:
    """``log |det D E(w)|`` for ``E(w) = exp_{x0}`` of time-one data ``w = (a0, p_t)``.

    Differentials are taken in left-invariant frame coefficients, so the
    determinant is the Jacobian for the Haar measure up to a constant that
    cancels in ratios.
    """
    W = np.atleast_2d(W)
    K, N = W.shape
    steps = delta * np.array([-2.0, -1.0, 1.0, 2.0])
    wts = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * delta)
    E = np.eye(N)
    P = W[:, None, None, :] + steps[None, None, :, None] * E[None, :, None, :]
    P = P.reshape(-1, N)
    pts = closed_exp(M, eps, x0, P[:, :M.n], P[:, M.n], 1.0)
    Y = closed_exp(M, eps, x0, W[:, :M.n], W[:, M.n], 1.0)
    amb = np.shape(Y)[1:]
    pts = np.asarray(pts).reshape((K, N * 4) + amb)
    out = np.empty(K)
    for k in range(K):
        c = _frame_coords(M, Y[k], pts[k]).reshape(N, 4, N)
        D = np.einsum("s,jsi->ij", wts, c)
        out[k] = math.log(abs(np.linalg.det(D)))
    return out


def contraction_jacobian(M: ModelSpace, eps: float, x0, w, s) -> np.ndarray:
    """Jacobian of ``x -> gamma_x(s)`` for ``x = E(w)``, by the exponential map.

    ``gamma_x`` runs from ``x0`` (``s = 0``) to ``x`` (``s = 1``); with
    ``N = n + 1`` the Jacobian is ``s^N |det DE(s w)| / |det DE(w)|``.
    """
    s = np.atleast_1d(np.asarray(s, float))
    w = np.asarray(w, float)
    N = M.dim
    W = np.vstack([w[None, :], s[:, None] * w[None, :]])
    ld = _log_det_exp(M, eps, x0, W)
    return np.exp(N * np.log(s) + ld[1:] - ld[0])


def contraction_jacobian_fd(M: ModelSpace, eps: float, x0, x, t: float, h: float = 1e-5,
                            seed_count: int = 64) -> float:
    """Jacobian of ``x -> contract(x, t)`` by central differences of the chart map.

    The chart determinant is weighted by the ``g``-volume density at both
    ends; each perturbed point gets its own boundary solve.
    """
    B = M.backend
    x = np.asarray(x, float)
    x0a = B.from_chart(np.asarray(x0, float))
    base = _arc(M, eps, x0a, B.from_chart(x), seed_count)
    hint = (np.append(*base.time_one_velocity()),)
    N = M.dim
    D = np.empty((N, N))
    for j in range(N):
        e = np.zeros(N)
        e[j] = h
        fp = contract(M, eps, x0, x + e, t, seed_count=4, hints=hint)
        fm = contract(M, eps, x0, x - e, t, seed_count=4, hints=hint)
        D[:, j] = (fp - fm) / (2 * h)
    y = contract(M, eps, x0, x, t, seed_count=4, hints=hint)
    return float(abs(np.linalg.det(D)) * B.volume_density(y) / B.volume_density(x))


# Monte Carlo ------------------------------------------------------------------

def _strata(dim: int, per_axis: int) -> np.ndarray:
    g = np.stack(np.meshgrid(*[np.arange(per_axis)] * dim, indexing="ij"), axis=-1)
    return g.reshape(-1, dim)


def stratified_points(region: Region, per_axis: int, per_stratum: int, rng) -> tuple:
    """Uniform points in each of ``per_axis^dim`` equal sub-boxes; returns points and stratum ids."""
    lo, hi = region.lo, region.hi
    dim = lo.size
    cells = _strata(dim, per_axis)
    u = rng.random((cells.shape[0], per_stratum, dim))
    pts = lo + (cells[:, None, :] + u) / per_axis * (hi - lo)
    ids = np.repeat(np.arange(cells.shape[0]), per_stratum)
    return pts.reshape(-1, dim), ids


def _stratified_ratio(y: np.ndarray, w: np.ndarray, ids: np.ndarray) -> tuple[float, float]:
    """``sum(w y)/sum(w)`` over equal-size strata with a delta-method standard error."""
    K = ids.max() + 1
    ok = np.isfinite(y)
    yw = np.where(ok, y * w, 0.0)
    ww = np.where(ok, w, 0.0)
    cnt = np.bincount(ids, weights=ok.astype(float), minlength=K)
    cnt = np.maximum(cnt, 1.0)
    Ybar = np.bincount(ids, weights=yw, minlength=K) / cnt
    Wbar = np.bincount(ids, weights=ww, minlength=K) / cnt
    R = Ybar.sum() / Wbar.sum()
    resid = np.where(ok, yw - R * ww, 0.0)
    rbar = np.bincount(ids, weights=resid, minlength=K) / cnt
    ss = np.bincount(ids, weights=(resid - rbar[ids]) ** 2 * ok, minlength=K)
    var_h = ss / np.maximum(cnt - 1.0, 1.0) / cnt
    se = math.sqrt(var_h.sum()) / Wbar.sum()
    return float(R), float(se)


def volume_benchmark(M: ModelSpace, region: Region, per_axis: int = 4, per_stratum: int = 16,
                     seed: int = 0) -> dict:
    """Monte Carlo ``nu(U)`` of a chart box against its quadrature value."""
    rng = np.random.default_rng(seed)
    pts, ids = stratified_points(region, per_axis, per_stratum, rng)
    rho = np.array([M.backend.volume_density(p) for p in pts])
    K = ids.max() + 1
    m = np.bincount(ids, weights=rho, minlength=K) / per_stratum
    var = np.bincount(ids, weights=(rho - m[ids]) ** 2, minlength=K) / (per_stratum - 1)
    V = region.chart_volume
    mc = V * m.mean()
    se = V * math.sqrt(np.sum(var / per_stratum)) / K
    lo, hi = region.lo, region.hi
    exact, _ = integrate.nquad(lambda *c: M.backend.volume_density(np.array(c)),
                               list(zip(lo, hi)), opts={"epsabs": 1e-12, "epsrel": 1e-10})
    return {"mc": float(mc), "stderr": float(se), "analytic": float(exact),
            "within": bool(abs(mc - exact) <= max(3.0 * se, 1e-12 * abs(exact)))}


@dataclass
class ExponentProbe:
    probes: list
    worst_exponent: float
    violations: int
    N: int
    starved: list = field(default_factory=list)

    def summary(self) -> dict:
        return {"worst_exponent": self.worst_exponent, "violations": self.violations,
                "N": self.N, "probes": len(self.probes), "starved": len(self.starved)}


def mcp_dimension(M: ModelSpace, eps: float) -> int:
    """``n + 3`` for the sub-Riemannian distance, ``n + 4`` for ``eps > 0``."""
    return M.n + 3 if eps == 0 else M.n + 4


def probe_region(M: ModelSpace, eps: float, region: Region, t_grid: Sequence[float],
                 rng, x0=None, per_axis: int = 3, per_stratum: int = 4,
                 target: float = TARGET_REL_ERROR, max_samples: int = MAX_SAMPLES,
                 seed_count: int = 64, N: int | None = None) -> list[McpProbe]:
    """MCP ratios ``nu(phi_t(U))/nu(U)`` over ``t_grid`` for one region.

    Samples are added stratum-wise (doubling) until every ratio reaches the
    relative standard error ``target``.

    Raises
    ------
    SampleStarvation
        If ``max_samples`` is reached first.
    """
    B = M.backend
    x0c = np.zeros(M.dim) if x0 is None else np.asarray(x0, float)
    x0a = B.from_chart(x0c)
    N = mcp_dimension(M, eps) if N is None else N
    s = 1.0 - np.asarray(t_grid, float)
    Js, ws, idl = [], [], []
    skipped = 0
    nstrata = per_axis ** M.dim
    k = per_stratum
    while True:
        pts, ids = stratified_points(region, per_axis, k, rng)
        for p in pts:
            xa = B.from_chart(p)
            try:
                arc = solve_bvp(M, eps, x0a, xa, seed_count=seed_count, samples=2)
            except BvpError:
                arc = None
            if arc is None or arc.ambiguous:
                skipped += 1
                Js.append(np.full(s.size, np.nan))
            else:
                w = np.append(*arc.time_one_velocity())
                Js.append(contraction_jacobian(M, eps, x0a, w, s))
            ws.append(B.volume_density(p))
        idl.append(ids)
        J = np.array(Js)
        W = np.array(ws)
        I = np.concatenate(idl)
        res = [_stratified_ratio(J[:, j], W, I) for j in range(s.size)]
        ok = all(se <= target * R for R, se in res)
        if ok:
            break
        if J.shape[0] >= max_samples:
            raise SampleStarvation(f"relative error {max(se / R for R, se in res):.3g} "
                                   f"after {J.shape[0]} samples")
        # double the sample count, keeping the strata balanced
        k = max(1, min(J.shape[0], max_samples - J.shape[0]) // nstrata)
    out = []
    for t, (R, se) in zip(t_grid, res):
        e = math.log(R) / math.log(1.0 - t) if R > 0 else math.inf
        out.append(McpProbe(model=M.name, eps=float(eps), x0=tuple(map(float, x0c)),
                            region=region, t=float(t), samples=int(J.shape[0]), ratio=R,
                            stderr=se, factor=(1.0 - t) ** N, N=N, exponent=e,
                            skipped=skipped))
    return out


def default_regions(M: ModelSpace, radii=(0.5, 1.0, 1.5), thin=(0.01, 0.002)) -> list[Region]:
    """Thin boxes around straight horizontal geodesics.

    Centres ``(rho, 0, ..., 0)``; horizontal half-width ``0.05 rho``,
    vertical half-width ``h rho^2`` for ``h`` in ``thin``.  Straight
    horizontal geodesics are where the contraction Jacobian of the
    Heisenberg group behaves like ``(1 - t)^(n+3)``.
    """
    out = []
    for r in radii:
        for h in thin:
            c = np.zeros(M.dim)
            c[0] = r
            hw = np.full(M.dim, 0.05 * r)
            hw[-1] = h * r * r
            out.append(Region(tuple(map(float, c)), tuple(map(float, hw))))
    return out


def _probe_task(args):
    name, eps, region, t_grid, seed, opts = args
    M = model_from_name(name)
    rng = np.random.default_rng(seed)
    try:
        return probe_region(M, eps, region, t_grid, rng, **opts), None
    except SampleStarvation as exc:
        return [], str(exc)


def mcp_exponent_probe(M: ModelSpace, eps: float, regions: Sequence[Region] | None = None,
                       t_grid: Sequence[float] = (0.1, 0.3, 0.5, 0.7, 0.9), seed: int = 0,
                       mapper=map, **opts) -> ExponentProbe:
    """Worst MCP exponent ``max log(ratio)/log(1 - t)`` over regions and ``t``.

    Every region gets its own random stream, spawned from ``seed``.
    """
    regions = default_regions(M) if regions is None else list(regions)
    seeds = np.random.SeedSequence(seed).spawn(len(regions))
    tasks = [(M.name, float(eps), reg, tuple(t_grid), sq, opts)
             for reg, sq in zip(regions, seeds)]
    probes, starved = [], []
    for (res, err), reg in zip(mapper(_probe_task, tasks), regions):
        probes.extend(res)
        if err is not None:
            starved.append((reg, err))
    worst = max((p.exponent for p in probes), default=math.nan)
    N = mcp_dimension(M, eps)
    return ExponentProbe(probes=probes, worst_exponent=float(worst),
                         violations=sum(p.violated for p in probes), N=N, starved=starved)


# density bound ---------------------------------------------------------------

@dataclass(frozen=True)
class ThetaRecord:
    model: str
    eps: float
    x: tuple
    r: float
    lam: float
    s: float
    measured: float
    bound: float
    flags: tuple = ()

    @property
    def margin(self) -> float:
        return self.measured - self.bound


def theta_bound(M: ModelSpace, eps: float, lam: float, r: float, s: float) -> float:
    """``s Theta(lam, s r)/Theta(lam, r)``, the lower bound for the contraction Jacobian."""
    k2 = lam * M.k2 if M.n > 2 else 0.0
    return s * kernels.theta_ratio(eps, lam, lam * M.k1, r, s, M.n, k2)


def theta_bound_check(M: ModelSpace, eps: float, samples: Sequence, s_grid=(0.25, 0.5, 0.75),
                      fd: bool = False, seed_count: int = 64) -> list[ThetaRecord]:
    """Contraction Jacobian against the density bound at chart points ``samples``.

    ``s`` is the fraction of the arc from ``x0`` (the identity) that is
    kept, so ``s = 1 - t`` in the MCP orientation.  With ``fd`` the
    Jacobian comes from finite differences of the chart map.
    """
    if not eps > 0:
        raise ValueError("theta_bound_check requires eps > 0")
    B = M.backend
    x0 = B.identity()
    x0c = np.zeros(M.dim)
    out = []
    for c in samples:
        c = np.asarray(c, float)
        xc = tuple(float(v) for v in np.round(c, 15))
        try:
            arc = _arc(M, eps, x0, B.from_chart(c), seed_count)
        except (CutLocusError, BvpError):
            out += [ThetaRecord(M.name, float(eps), xc, math.nan, math.nan, float(s),
                                math.nan, math.nan, ("cut_locus",)) for s in s_grid]
            continue
        w = np.append(*arc.time_one_velocity())
        if fd:
            J = [contraction_jacobian_fd(M, eps, x0c, c, 1.0 - s) for s in s_grid]
        else:
            J = contraction_jacobian(M, eps, x0, w, s_grid)
        for s, j in zip(s_grid, J):
            try:
                b, fl = theta_bound(M, eps, min(arc.lam, 1.0), arc.length, s), ()
            except (KernelDomainError, ValueError):
                b, fl = math.nan, ("window",)
            out.append(ThetaRecord(M.name, float(eps), xc, arc.length, arc.lam, float(s),
                                   float(j), float(b), fl))
    return out
