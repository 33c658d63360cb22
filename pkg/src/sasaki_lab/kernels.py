"""Scalar comparison kernels.

The functions here are the one-dimensional building blocks of every bound
checked by the harness: the model solutions ``phi_mu``, ``psi_mu`` of the
scalar Jacobi equation, the auxiliary ratio ``Psi_mu``, the Riemannian and
Sasakian Laplacian rates, and the densities entering the measure
contraction estimate.

Conventions
-----------
``mu`` is a curvature parameter with ``phi_mu'' = mu * phi_mu``, so
``mu < 0`` is the trigonometric (positively curved) branch.  All kernels
switch to a Taylor series in ``u = mu * r**2`` when ``|u| < TAYLOR_SWITCH``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy import integrate, optimize

TAYLOR_SWITCH = 1e-4
TAYLOR_TERMS = 5  # terms in u; degree 9 in r for phi


class KernelDomainError(ValueError):
    """Raised when a kernel is evaluated past its first pole.

    Attributes
    ----------
    pole : float
        Location of the first singularity in ``r``.
    """

    def __init__(self, message: str, pole: float):
        super().__init__(f"{message} (first pole at r={pole:.15g})")
        self.pole = pole


@dataclass(frozen=True)
class KernelBundle:
    mu: float
    r: float
    phi: float
    dphi: float
    psi: float
    dpsi: float
    ddpsi: float
    PsiCap: float


@dataclass(frozen=True)
class EpsRateInputs:
    eps: float
    lam: float
    kappa: float
    r: float

    def __post_init__(self):
        if not (0.0 < self.lam <= 1.0):
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.r > 0.0:
            raise ValueError(f"r must be positive, got {self.r}")


class McpDensities(NamedTuple):
    PhiEps: float
    Xi: float
    Theta: float


# series coefficients in u = mu r^2 -------------------------------------------

def _bernoulli(nmax: int) -> list[Fraction]:
    # exact B_0..B_nmax, B_1 = -1/2 convention
    B = [Fraction(0)] * (nmax + 1)
    for m in range(nmax + 1):
        B[m] = Fraction(1) if m == 0 else -sum(
            Fraction(math.comb(m + 1, k)) * B[k] for k in range(m)) / (m + 1)
    return B


_B = [float(b) for b in _bernoulli(2 * TAYLOR_TERMS + 4)]
_FACT = [math.factorial(k) for k in range(2 * TAYLOR_TERMS + 8)]
# phi = r sum u^k/(2k+1)!, dphi = sum u^k/(2k)!, psi = r^3 sum u^k/(2k+3)!, dpsi = r^2 sum u^k/(2k+2)!
_C_PHI = np.array([1.0 / _FACT[2 * k + 1] for k in range(TAYLOR_TERMS)])
_C_DPHI = np.array([1.0 / _FACT[2 * k] for k in range(TAYLOR_TERMS)])
_C_PSI = np.array([1.0 / _FACT[2 * k + 3] for k in range(TAYLOR_TERMS)])
_C_DPSI = np.array([1.0 / _FACT[2 * k + 2] for k in range(TAYLOR_TERMS)])
# Psi = r^2 (x - tanh x)/x^3 with x^2 = u
_C_PSICAP = np.array([
    -(2.0 ** (2 * n)) * (2.0 ** (2 * n) - 1.0) * _B[2 * n] / _FACT[2 * n]
    for n in range(2, TAYLOR_TERMS + 2)
])
# (phi'/phi) * Psi = r (x coth x - 1)/x^2
_C_RATEPSI = np.array([
    (2.0 ** (2 * n)) * _B[2 * n] / _FACT[2 * n] for n in range(1, TAYLOR_TERMS + 1)
])

# F_Sas = (1/r) N(u)/D(u), N = (sin x - x cos x)/x^3, D = (2 - 2cos x - x sin x)/x^4, u = -x^2 ... for k>0
_FSAS_TERMS = 14
_C_FSAS_N = np.array([(-1.0) ** (j + 1) * 2 * j / math.factorial(2 * j + 1)
                      for j in range(1, _FSAS_TERMS + 1)])
_C_FSAS_D = np.array([(-1.0) ** j * (2 * j - 2) / math.factorial(2 * j)
                      for j in range(2, _FSAS_TERMS + 2)])
_FSAS_SWITCH = 0.5


def _poly(c, u):
    return np.polynomial.polynomial.polyval(u, c)


# pole windows ------------------------------------------------------------------

def pole_window(kind: str, mu: float, eps: float = 0.0) -> float:
    """First singular radius of a kernel family.

    Parameters
    ----------
    kind : {'phi', 'Psi', 'f_rie', 'f_sas', 'eps_rate'}
        ``'phi'`` is the first zero of ``phi_mu`` (poles of ``phi'/phi``),
        ``'Psi'`` the first pole of ``Psi_mu``.  ``'f_rie'`` and ``'f_sas'``
        take the curvature ``k`` (i.e. ``mu = -k``) as ``mu`` argument for
        convenience; ``'eps_rate'`` takes ``kappa``.
    mu : float
        Curvature parameter of the family (see ``kind``).
    eps : float
        Only used by ``'eps_rate'``; with ``eps == 0`` the rate reduces to
        ``F_Sas`` and inherits its window.
    """
    if kind == "phi":
        return math.pi / math.sqrt(-mu) if mu < 0 else math.inf
    if kind == "Psi":
        return 0.5 * math.pi / math.sqrt(-mu) if mu < 0 else math.inf
    if kind == "f_rie":
        return math.pi / math.sqrt(mu) if mu > 0 else math.inf
    if kind == "f_sas":
        return 2.0 * math.pi / math.sqrt(mu) if mu > 0 else math.inf
    if kind == "eps_rate":
        if mu <= 0:
            return math.inf
        return (2.0 if eps == 0 else 1.0) * math.pi / math.sqrt(mu)
    raise ValueError(f"unknown kernel kind {kind!r}")


# kernel bundle -----------------------------------------------------------------

def kernel_bundle(mu: float, r: float) -> KernelBundle:
    """Evaluate ``phi_mu``, ``psi_mu``, ``Psi_mu`` and derivatives at ``r``.

    Parameters
    ----------
    mu : float
        Curvature parameter.
    r : float
        Arc length, ``r >= 0``.

    Returns
    -------
    KernelBundle
        ``PsiCap`` is ``inf`` past its pole at ``pi/(2 sqrt(-mu))``.
    """
    mu = float(mu)
    r = float(r)
    if r < 0 or not math.isfinite(mu):
        raise ValueError("kernel_bundle requires r >= 0 and finite mu")
    u = mu * r * r
    if abs(u) < TAYLOR_SWITCH:
        phi = r * _poly(_C_PHI, u)
        dphi = _poly(_C_DPHI, u)
        psi = r ** 3 * _poly(_C_PSI, u)
        dpsi = r ** 2 * _poly(_C_DPSI, u)
        Psi = r ** 2 * _poly(_C_PSICAP, u)
    elif mu > 0:
        s = math.sqrt(mu)
        x = s * r
        phi = math.sinh(x) / s
        dphi = math.cosh(x)
        psi = (math.sinh(x) - x) / s ** 3
        dpsi = 2.0 * math.sinh(0.5 * x) ** 2 / mu
        Psi = (s - math.tanh(x) / r) / s ** 3
    else:
        s = math.sqrt(-mu)
        x = s * r
        phi = math.sin(x) / s
        dphi = math.cos(x)
        psi = (x - math.sin(x)) / s ** 3
        dpsi = 2.0 * math.sin(0.5 * x) ** 2 / s ** 2
        Psi = (math.tan(x) / r - s) / s ** 3
    return KernelBundle(mu=mu, r=r, phi=float(phi), dphi=float(dphi), psi=float(psi),
                        dpsi=float(dpsi), ddpsi=float(phi), PsiCap=float(Psi))


def _phi_ratio_times_Psi(mu: float, r: float) -> float:
    """Return ``(phi'/phi)(r) * Psi_mu(r)`` without the removable pole of Psi."""
    u = mu * r * r
    if abs(u) < TAYLOR_SWITCH:
        return r * _poly(_C_RATEPSI, u)
    if mu > 0:
        s = math.sqrt(mu)
        return (s / math.tanh(s * r) - 1.0 / r) / mu
    s = math.sqrt(-mu)
    return (1.0 / r - s / math.tan(s * r)) / (-mu)


def _Psi(mu: float, r: float) -> float:
    u = mu * r * r
    if abs(u) < TAYLOR_SWITCH:
        return r ** 2 * _poly(_C_PSICAP, u)
    if mu > 0:
        s = math.sqrt(mu)
        return (s - math.tanh(s * r) / r) / s ** 3
    s = math.sqrt(-mu)
    return (math.tan(s * r) / r - s) / s ** 3


def _phi_log_derivative(mu: float, r: float) -> float:
    if mu > 0:
        s = math.sqrt(mu)
        return s / math.tanh(s * r)
    if mu < 0:
        s = math.sqrt(-mu)
        return s / math.tan(s * r)
    return 1.0 / r


# comparison rates ---------------------------------------------------------------

def f_rie(r: float, k: float) -> float:
    """Riemannian Laplacian comparison rate ``F_Rie(r, k)``."""
    if not r > 0:
        raise ValueError("f_rie requires r > 0")
    w = pole_window("f_rie", k)
    if r >= w:
        raise KernelDomainError("F_Rie evaluated past its pole", w)
    if k > 0:
        s = math.sqrt(k)
        return s / math.tan(s * r)
    if k < 0:
        s = math.sqrt(-k)
        return s / math.tanh(s * r)
    return 1.0 / r


def f_sas(r: float, k: float) -> float:
    """Sasakian horizontal Laplacian rate ``F_Sas(r, k)``.

    The closed form uses the denominator ``2 - 2 cos x - x sin x`` (resp.
    its hyperbolic counterpart); a series in ``k r^2`` is used near zero.
    """
    if not r > 0:
        raise ValueError("f_sas requires r > 0")
    w = pole_window("f_sas", k)
    if r >= w:
        raise KernelDomainError("F_Sas evaluated past its pole", w)
    u = k * r * r
    if abs(u) < _FSAS_SWITCH:
        return _poly(_C_FSAS_N, u) / (_poly(_C_FSAS_D, u) * r)
    s = math.sqrt(abs(k))
    x = s * r
    if k > 0:
        return s * (math.sin(x) - x * math.cos(x)) / (2.0 - 2.0 * math.cos(x) - x * math.sin(x))
    return s * (x * math.cosh(x) - math.sinh(x)) / (2.0 - 2.0 * math.cosh(x) + x * math.sinh(x))


def comparison_rates(r: float, k: float) -> tuple[float, float]:
    """Return ``(F_Rie(r, k), F_Sas(r, k))``.

    Raises
    ------
    KernelDomainError
        If ``sqrt(k) r >= pi`` (Riemannian) or ``>= 2 pi`` (Sasakian).
    """
    return f_rie(r, k), f_sas(r, k)


def eps_sas_rate(inp: EpsRateInputs | None = None, *, eps: float | None = None,
                 lam: float | None = None, kappa: float | None = None,
                 r: float | None = None) -> float:
    """Rate ``(phi'/phi)(r) (lam Psi(r) + eps)/(lam Psi(r/2) + eps)``.

    All kernels are taken at ``mu = -kappa``.  Accepts either an
    :class:`EpsRateInputs` or keyword arguments.
    """
    if inp is None:
        inp = EpsRateInputs(eps=eps, lam=lam, kappa=kappa, r=r)
    return _eps_rate_raw(inp.eps, inp.lam, inp.kappa, inp.r)


def _eps_rate_raw(eps: float, lam: float, kappa: float, r: float) -> float:
    w = pole_window("eps_rate", kappa, eps)
    if r >= w:
        raise KernelDomainError("eps_sas_rate evaluated past its pole", w)
    if eps == 0.0:
        return f_sas(r, kappa)
    mu = -kappa
    num = lam * _phi_ratio_times_Psi(mu, r) + eps * _phi_log_derivative(mu, r)
    den = lam * _Psi(mu, 0.5 * r) + eps
    return num / den


# MCP densities ------------------------------------------------------------------

def _xi_denominator(eps: float, kappa: float, r: float) -> float:
    b = kernel_bundle(-kappa, r)
    return b.phi * (eps * r - b.psi) + b.dpsi ** 2


def xi_window(eps: float, kappa: float) -> float:
    """First radius where the denominator of ``Xi_{eps,kappa}`` stops being positive."""
    if kappa <= 0:
        return math.inf
    top = 2.0 * math.pi / math.sqrt(kappa)
    grid = np.linspace(top * 1e-3, top, 2001)
    vals = np.array([_xi_denominator(eps, kappa, r) for r in grid])
    bad = np.nonzero(vals <= 0)[0]
    if bad.size == 0:
        return top
    i = bad[0]
    if i == 0:
        return grid[0]
    return optimize.brentq(lambda r: _xi_denominator(eps, kappa, r), grid[i - 1], grid[i],
                           xtol=1e-14)


def xi(eps: float, kappa: float, r: float) -> float:
    """``Xi_{eps,kappa}(r) = phi/(phi (eps r - psi) + psi'^2)`` at ``mu = -kappa``."""
    b = kernel_bundle(-kappa, r)
    den = b.phi * (eps * r - b.psi) + b.dpsi ** 2
    if not den > 0:
        raise KernelDomainError("Xi denominator not positive", xi_window(eps, kappa))
    return b.phi / den


def phi_eps_printed(eps: float, lam: float, kappa: float, r: float) -> float:
    """Closed-form branches of ``Phi_{eps,lam,kappa}`` as printed.

    Kept only as a cross-check oracle; see :func:`phi_eps_canonical`.
    """
    if kappa == 0:
        return r * (lam * r * r + 12.0 * eps) ** 1.5
    b = kernel_bundle(-kappa, r)
    return lam * (2.0 / kappa * (1.0 - b.dphi) - r * b.phi) + eps * b.phi


def _reference_point(window: float) -> float:
    return min(1.0, 0.5 * window)


def log_phi_eps(eps: float, lam: float, kappa: float, r: float) -> float:
    """``log Phi`` normalized so that it vanishes at the reference radius."""
    c = _reference_point(pole_window("eps_rate", kappa, eps))
    val, _ = integrate.quad(lambda s: _eps_rate_raw(eps, lam, kappa, s), c, r,
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def phi_eps_canonical(eps: float, lam: float, kappa: float, r: float) -> float:
    """``Phi_{eps,lam,kappa}(r) = exp(int_c^r eps_sas_rate)`` with ``c = 1``.

    ``c`` is reduced to half the pole window when the window is shorter than
    2; ratios ``Phi(t r)/Phi(r)`` do not depend on ``c``.
    """
    return math.exp(log_phi_eps(eps, lam, kappa, r))


def log_xi_integral(eps: float, kappa: float, r: float) -> float:
    """``int_c^r Xi_{eps,kappa}`` with the same reference point as Phi."""
    c = _reference_point(xi_window(eps, kappa))
    val, _ = integrate.quad(lambda s: xi(eps, kappa, s), c, r, epsabs=1e-13,
                            epsrel=1e-12, limit=200)
    return val


def log_theta(eps: float, lam: float, kappa: float, r: float, n: int,
              kappa2: float = 0.0) -> float:
    """``log Theta(lam, r)``; ``kappa = lam k1`` and ``kappa2 = lam k2``."""
    expo = min(1.0, 1.0 / lam - 1.0)
    out = expo * math.log(r) + log_phi_eps(eps, lam, kappa, r)
    if n > 2:
        out += (n - 2) * math.log(kernel_bundle(-kappa2, r).phi)
    if eps > 0:
        out += eps * log_xi_integral(eps, kappa, r)
    return out


def mcp_densities(eps: float, lam: float, kappa: float, r: float, n: int,
                  kappa2: float = 0.0) -> McpDensities:
    """Densities of the measure contraction estimate at radius ``r``.

    Parameters
    ----------
    eps : float
        Metric parameter, ``eps >= 0``.
    lam : float
        Horizontal energy fraction in ``(0, 1]``.
    kappa : float
        ``lam * k1``.
    r : float
        Radius inside the positivity window of the Xi denominator.
    n : int
        Horizontal dimension.
    kappa2 : float
        ``lam * k2``; only used when ``n > 2``.

    Returns
    -------
    McpDensities
        Canonical ``Phi``, ``Xi`` and ``Theta`` (reference point 1).
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if not r > 0:
        raise ValueError("r must be positive")
    w = xi_window(eps, kappa)
    if r >= w:
        raise KernelDomainError("radius outside the Xi positivity window", w)
    Phi = phi_eps_canonical(eps, lam, kappa, r)
    Xi = xi(eps, kappa, r)
    Theta = math.exp(log_theta(eps, lam, kappa, r, n, kappa2))
    return McpDensities(Phi, Xi, Theta)


def theta_ratio(eps: float, lam: float, kappa: float, r: float, t: float, n: int,
                kappa2: float = 0.0) -> float:
    """``Theta(lam, t r)/Theta(lam, r)`` for ``t`` in ``(0, 1]``."""
    if t == 1.0:
        return 1.0
    return math.exp(log_theta(eps, lam, kappa, t * r, n, kappa2)
                    - log_theta(eps, lam, kappa, r, n, kappa2))


def kernel_grid(mus, rs) -> np.ndarray:
    """Rows ``(mu, r, phi, dphi, psi, dpsi, ddpsi, PsiCap)`` over a product grid."""
    rows = []
    for mu in mus:
        for r in rs:
            b = kernel_bundle(mu, r)
            rows.append((b.mu, b.r, b.phi, b.dphi, b.psi, b.dpsi, b.ddpsi, b.PsiCap))
    return np.array(rows, dtype=float).reshape(-1, 8)
