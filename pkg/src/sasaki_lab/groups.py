"""Group realizations of the three Sasakian model families.

Every backend exposes the same small surface:

* an *ambient* representation used for residuals and group products
  (chart coordinates for the Heisenberg group, unit quaternions for the Hopf
  sphere, lifted chart coordinates for the universal cover of SL(2,R)),
* a chart of dimension ``n + 1`` and the coframe of the left-invariant frame
  in that chart,
* the left-invariant frame ``X_1..X_m, Y_1..Y_m, S`` with
  ``[X_i, Y_i] = -S`` and ``[S, X_i] = -delta Y_i``, ``[S, Y_i] = delta X_i``,
* a closed-form geodesic flow from the identity.

The frame coefficients of a tangent vector are ordered ``(a_X, a_Y, a_S)``.
"""
from __future__ import annotations

import math

import numpy as np

# entire functions cosh(sqrt(Q)) and sinh(sqrt(Q))/sqrt(Q) --------------------

_SERIES_Q = 1e-3


def ch_sh(Q):
    """Return ``(cosh sqrt(Q), sinh sqrt(Q)/sqrt(Q))`` for real or complex ``Q``."""
    Q = np.asarray(Q)
    small = np.abs(Q) < _SERIES_Q
    if np.iscomplexobj(Q):
        rt = np.sqrt(np.where(small, 1.0, Q))
        ch = np.cosh(rt)
        sh = np.sinh(rt) / rt
    else:
        pos = Q > 0
        rp = np.sqrt(np.where(pos & ~small, Q, 1.0))
        rn = np.sqrt(np.where(~pos & ~small, -Q, 1.0))
        ch = np.where(pos, np.cosh(rp), np.cos(rn))
        sh = np.where(pos, np.sinh(rp) / rp, np.sin(rn) / rn)
    # series through Q^5
    ch_s = 1 + Q / 2 * (1 + Q / 12 * (1 + Q / 30 * (1 + Q / 56 * (1 + Q / 90))))
    sh_s = 1 + Q / 6 * (1 + Q / 20 * (1 + Q / 42 * (1 + Q / 72 * (1 + Q / 110))))
    return np.where(small, ch_s, ch), np.where(small, sh_s, sh)


def _sinc_shift(theta):
    """Return ``(exp(i theta) - 1)/(i theta)`` with a series near zero."""
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < 1e-4
    th = np.where(small, 1.0, theta)
    full = (np.exp(1j * th) - 1.0) / (1j * th)
    ser = 1 + 1j * theta / 2 - theta ** 2 / 6 - 1j * theta ** 3 / 24
    return np.where(small, ser, full)


def _cubic_ratio(theta):
    """Return ``(theta - sin theta)/theta**2`` with a series near zero."""
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < 1e-3
    th = np.where(small, 1.0, theta)
    full = (th - np.sin(th)) / th ** 2
    t2 = theta * theta
    ser = theta / 6 * (1 - t2 / 20 * (1 - t2 / 42 * (1 - t2 / 72)))
    return np.where(small, ser, full)


# quaternion helpers, order (w, i, j, k) -------------------------------------------

def qmul(p, q):
    p = np.asarray(p)
    q = np.asarray(q)
    w1, x1, y1, z1 = np.moveaxis(p, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(q, -1, 0)
    return np.stack([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ], axis=-1)


def qconj(q):
    q = np.asarray(q)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def qexp(v):
    """Exponential of a pure quaternion given by its ``(i, j, k)`` part."""
    v = np.asarray(v)
    Q = -np.sum(v * v, axis=-1)
    ch, sh = ch_sh(Q)
    return np.concatenate([ch[..., None], sh[..., None] * v], axis=-1)


# 2x2 matrix helpers -----------------------------------------------------------

def m2mul(A, B):
    return np.einsum("...ij,...jk->...ik", A, B)


def m2inv_sl(A):
    """Inverse of determinant-one 2x2 matrices."""
    A = np.asarray(A)
    out = np.empty_like(A)
    out[..., 0, 0] = A[..., 1, 1]
    out[..., 1, 1] = A[..., 0, 0]
    out[..., 0, 1] = -A[..., 0, 1]
    out[..., 1, 0] = -A[..., 1, 0]
    return out


class Backend:
    """Base class; concrete backends fill in the group operations."""

    kind = ""
    delta = 0.0
    amb_dim = 0

    def __init__(self, n: int):
        self.n = n
        self.m = n // 2
        self.dim = n + 1

    # frame algebra
    def bracket(self, i: int, j: int) -> np.ndarray:
        raise NotImplementedError

    def structure_constants(self) -> np.ndarray:
        d = self.dim
        c = np.zeros((d, d, d))
        for i in range(d):
            for j in range(d):
                c[i, j] = self.bracket(i, j)
        return c

    # ambient operations
    def identity(self) -> np.ndarray:
        raise NotImplementedError

    def from_chart(self, x):
        raise NotImplementedError

    def to_chart(self, g):
        raise NotImplementedError

    def mul(self, g, h):
        raise NotImplementedError

    def inv(self, g):
        raise NotImplementedError

    def coframe(self, x) -> np.ndarray:
        """Matrix ``M[mu, a]``: frame coefficient ``a`` of ``d/dx_mu`` at chart ``x``."""
        raise NotImplementedError

    def volume_density(self, x) -> float:
        """Riemannian g-volume density of the chart (``|det M|``)."""
        return abs(np.linalg.det(self.coframe(x)))

    # RK representation
    def rk_pos(self, g):
        raise NotImplementedError

    def rk_pos_rhs(self, pos, coeffs):
        raise NotImplementedError

    def rk_finish(self, g0, positions):
        raise NotImplementedError

    # closed form flow from the identity
    def flow(self, a0, p, eps: float, t=1.0):
        raise NotImplementedError

    def residual(self, g, target):
        return np.asarray(g) - np.asarray(target)

    def chart_distance_scale(self, g) -> float:
        return float(np.linalg.norm(self.to_chart(g)))


def _rotate_pairs(a0, angle, m):
    """Apply ``exp(angle J)`` to horizontal coefficient vectors."""
    w = a0[..., :m] + 1j * a0[..., m:]
    w = w * np.exp(1j * np.asarray(angle))[..., None]
    return np.concatenate([w.real, w.imag], axis=-1)


class HeisenbergBackend(Backend):
    """Heisenberg group of dimension ``n + 1`` in exponential coordinates.

    Group law ``(x, y, z)(x', y', z') = (x + x', y + y', z + z' + 1/2 sum(x' y - x y'))``
    so that ``X_i = d/dx_i + (y_i/2) d/dz`` and ``Y_i = d/dy_i - (x_i/2) d/dz``.
    """

    kind = "heisenberg"
    delta = 0.0

    def __init__(self, n: int):
        super().__init__(n)
        self.amb_dim = n + 1

    def bracket(self, i, j):
        out = np.zeros(self.dim)
        m = self.m
        if i < m and j == i + m:
            out[-1] = -1.0
        elif j < m and i == j + m:
            out[-1] = 1.0
        return out

    def identity(self):
        return np.zeros(self.dim)

    def from_chart(self, x):
        return np.asarray(x)

    def to_chart(self, g):
        return np.asarray(g)

    def mul(self, g, h):
        g = np.asarray(g)
        h = np.asarray(h)
        m = self.m
        xg, yg = g[..., :m], g[..., m:2 * m]
        xh, yh = h[..., :m], h[..., m:2 * m]
        z = g[..., -1] + h[..., -1] + 0.5 * np.sum(xh * yg - xg * yh, axis=-1)
        return np.concatenate([g[..., :-1] + h[..., :-1], z[..., None]], axis=-1)

    def inv(self, g):
        return -np.asarray(g)

    def coframe(self, x):
        x = np.asarray(x, dtype=float)
        m = self.m
        M = np.eye(self.dim)
        M[:m, -1] = -0.5 * x[m:2 * m]
        M[m:2 * m, -1] = 0.5 * x[:m]
        return M

    def frame_matrix(self, x):
        """Chart components ``F[a, mu]`` of the frame vector ``E_a`` at ``x``."""
        x = np.asarray(x, dtype=float)
        m = self.m
        F = np.eye(self.dim)
        F[:m, -1] = 0.5 * x[m:2 * m]
        F[m:2 * m, -1] = -0.5 * x[:m]
        return F

    def volume_density(self, x):
        return 1.0

    def rk_pos(self, g):
        return np.asarray(g, dtype=float)

    def rk_pos_rhs(self, pos, coeffs):
        return coeffs @ self.frame_matrix(pos)

    def rk_finish(self, g0, positions):
        return positions

    def flow(self, a0, p, eps, t=1.0):
        a0 = np.asarray(a0, dtype=float)
        p = np.asarray(p, dtype=float)
        t = np.asarray(t, dtype=float)
        m = self.m
        b = eps * p
        omega = -p
        theta = omega * t
        w0 = a0[..., :m] + 1j * a0[..., m:]
        zeta = w0 * (t * _sinc_shift(theta))[..., None]
        w2 = np.sum(np.abs(w0) ** 2, axis=-1)
        z = b * t - 0.5 * w2 * t * t * _cubic_ratio(theta)
        return np.concatenate([zeta.real, zeta.imag, z[..., None]], axis=-1)


class HopfBackend(Backend):
    """Unit quaternions with ``X = q j``, ``Y = q i``, ``S = 2 q k``.

    The chart is ``q = exp(u X + v Y) exp(theta S)``, valid while the base
    point stays away from the antipodal fiber.
    """

    kind = "hopf"
    delta = 4.0
    amb_dim = 4

    # pure quaternion (i, j, k) part of each frame element
    _ALG = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 2.0]])

    def __init__(self, n: int):
        if n != 2:
            raise ValueError("HopfSphere is provided for n = 2 only")
        super().__init__(n)

    def _alg_to_pure(self, coeffs):
        return np.asarray(coeffs) @ self._ALG

    def _pure_to_alg(self, v):
        v = np.asarray(v)
        return np.stack([v[..., 1], v[..., 0], 0.5 * v[..., 2]], axis=-1)

    def bracket(self, i, j):
        e = np.eye(3)
        pi = np.concatenate([[0.0], self._alg_to_pure(e[i])])
        pj = np.concatenate([[0.0], self._alg_to_pure(e[j])])
        c = qmul(pi, pj) - qmul(pj, pi)
        return self._pure_to_alg(c[1:])

    def identity(self):
        return np.array([1.0, 0.0, 0.0, 0.0])

    def from_chart(self, x):
        x = np.asarray(x)
        u, v, th = x[..., 0], x[..., 1], x[..., 2]
        zero = np.zeros_like(u)
        P = qexp(np.stack([v, u, zero], axis=-1))
        K = qexp(np.stack([zero, zero, 2.0 * th], axis=-1))
        return qmul(P, K)

    def to_chart(self, g):
        g = np.asarray(g, dtype=float)
        q0, q1, q2, q3 = np.moveaxis(g, -1, 0)
        c = np.hypot(q0, q3)
        rho = np.arccos(np.clip(c, -1.0, 1.0))
        two_th = np.arctan2(q3, q0)
        s = np.where(rho < 1e-8, 1.0 - rho ** 2 / 6, np.sin(rho) / np.where(rho < 1e-8, 1.0, rho))
        w = (q2 + 1j * q1) / s * np.exp(-1j * two_th)
        return np.stack([w.real, w.imag, 0.5 * two_th], axis=-1)

    def mul(self, g, h):
        return qmul(g, h)

    def inv(self, g):
        return qconj(g)

    def coframe(self, x):
        x = np.asarray(x, dtype=float)
        q = self.from_chart(x)
        M = np.empty((3, 3))
        h = 1e-30
        for mu in range(3):
            xc = x.astype(complex)
            xc[mu] += 1j * h
            dq = np.imag(self.from_chart(xc)) / h
            xi = qmul(qconj(q), dq)
            M[mu] = self._pure_to_alg(xi[1:])
        return M

    def rk_pos(self, g):
        return np.asarray(g, dtype=float)

    def rk_pos_rhs(self, pos, coeffs):
        xi = np.concatenate([[0.0], self._alg_to_pure(coeffs)])
        return qmul(pos, xi)

    def rk_finish(self, g0, positions):
        return positions

    def flow(self, a0, p, eps, t=1.0):
        a0 = np.asarray(a0, dtype=float)
        p = np.asarray(p, dtype=float)
        t = np.asarray(t, dtype=float)
        d = self.delta
        b = eps * p
        omega = p * (eps * d - 1.0)
        beta = -omega / d
        eta = np.concatenate([a0, (b + beta)[..., None]], axis=-1)
        E = qexp(t[..., None] * self._alg_to_pure(eta))
        ang = -t * beta
        zero = np.zeros_like(ang)
        K = qexp(np.stack([zero, zero, 2.0 * ang], axis=-1))
        return qmul(E, K)

    def residual(self, g, target):
        return np.asarray(g) - np.asarray(target)

    def chart_distance_scale(self, g):
        g = np.asarray(g)
        return float(np.linalg.norm(g - self.identity()))


class AdSBackend(Backend):
    """Universal cover of SL(2,R) with ``X = diag(1,-1)``, ``Y = [[0,1],[1,0]]``,
    ``S = [[0,-2],[2,0]]``.

    Points are stored as lifted chart coordinates ``(u, v, theta)`` of
    ``g = exp(u X + v Y) exp(theta S)`` with ``theta`` real (not reduced
    modulo ``pi``).
    """

    kind = "ads"
    delta = -4.0
    amb_dim = 3

    _BASIS = np.array([
        [[1.0, 0.0], [0.0, -1.0]],
        [[0.0, 1.0], [1.0, 0.0]],
        [[0.0, -2.0], [2.0, 0.0]],
    ])

    def __init__(self, n: int):
        if n != 2:
            raise ValueError("AntiDeSitter is provided for n = 2 only")
        super().__init__(n)

    def alg_matrix(self, coeffs):
        return np.einsum("...a,aij->...ij", np.asarray(coeffs), self._BASIS)

    @staticmethod
    def matrix_to_alg(A):
        A = np.asarray(A)
        alpha = 0.5 * (A[..., 0, 0] - A[..., 1, 1])
        beta = 0.5 * (A[..., 0, 1] + A[..., 1, 0])
        gamma = 0.25 * (A[..., 1, 0] - A[..., 0, 1])
        return np.stack([alpha, beta, gamma], axis=-1)

    def bracket(self, i, j):
        A, B = self._BASIS[i], self._BASIS[j]
        return self.matrix_to_alg(A @ B - B @ A)

    def expm(self, coeffs):
        """Matrix exponential of algebra elements given by frame coefficients."""
        coeffs = np.asarray(coeffs)
        A = self.alg_matrix(coeffs)
        Q = coeffs[..., 0] ** 2 + coeffs[..., 1] ** 2 - 4.0 * coeffs[..., 2] ** 2
        ch, sh = ch_sh(Q)
        eye = np.eye(2)
        return ch[..., None, None] * eye + sh[..., None, None] * A

    def matrix(self, x):
        x = np.asarray(x)
        zero = np.zeros_like(x[..., 0])
        P = self.expm(np.stack([x[..., 0], x[..., 1], zero], axis=-1))
        K = self.expm(np.stack([zero, zero, x[..., 2]], axis=-1))
        return m2mul(P, K)

    @staticmethod
    def polar_chart(G):
        """Chart ``(u, v, theta mod pi)`` of matrices via polar decomposition."""
        G = np.asarray(G, dtype=float)
        # G = P K, P = sqrt(G G^T)
        GGt = m2mul(G, np.swapaxes(G, -1, -2))
        tr = GGt[..., 0, 0] + GGt[..., 1, 1]
        sq = np.sqrt(tr + 2.0)
        P = (GGt + np.eye(2)) / sq[..., None, None]
        K = m2mul(m2inv_sl(P), G)
        th = 0.5 * np.arctan2(K[..., 1, 0], K[..., 0, 0])
        c = 0.5 * (P[..., 0, 0] + P[..., 1, 1])
        rho = np.arccosh(np.maximum(c, 1.0))
        s = np.where(rho < 1e-8, 1.0 + rho ** 2 / 6,
                     np.sinh(rho) / np.where(rho < 1e-8, 1.0, rho))
        u = 0.5 * (P[..., 0, 0] - P[..., 1, 1]) / s
        v = P[..., 0, 1] / s
        return np.stack([u, v, th], axis=-1)

    def lift_path(self, mats, theta0):
        """Chart coordinates along a matrix path, with theta unwrapped from ``theta0``.

        Returns the lifted charts and, per path, the largest step of
        ``2 theta`` between consecutive samples (a resolution check).
        """
        ch = self.polar_chart(mats)
        th = np.unwrap(2.0 * ch[..., 2], axis=0) / 2.0
        k = np.round((theta0 - th[0]) / math.pi)
        ch[..., 2] = th + k * math.pi
        jump = np.max(np.abs(np.diff(2.0 * ch[..., 2], axis=0)), axis=0, initial=0.0)
        return ch, jump

    _MAX_EXTENT = 40.0

    def _lifted(self, path_fn, theta0, extent):
        """Lift the endpoint of matrix paths ``path_fn(s)``, ``s`` in [0, 1].

        ``path_fn`` maps a grid of shape ``(K,)`` to matrices ``(K, ..., 2, 2)``.
        Paths that leave the numerically trustworthy range, or whose lift
        does not resolve, come back as ``nan``.
        """
        K = int(32 + 16 * math.ceil(min(extent, self._MAX_EXTENT)))
        for _ in range(5):
            s = np.linspace(0.0, 1.0, K + 1)
            with np.errstate(all="ignore"):
                ch, jump = self.lift_path(path_fn(s), theta0)
            end = ch[-1]
            bad = ~(jump < 0.5) | ~np.all(np.isfinite(end), axis=-1)
            if not np.any(bad):
                return end
            K *= 2
        end = np.array(end)
        end[bad] = np.nan
        return end

    def identity(self):
        return np.zeros(3)

    def from_chart(self, x):
        return np.asarray(x)

    def to_chart(self, g):
        return np.asarray(g)

    def mul(self, g, h):
        g, h = np.broadcast_arrays(np.asarray(g, dtype=float), np.asarray(h, dtype=float))
        Mg = self.matrix(g)
        ext = float(np.max(np.linalg.norm(h, axis=-1), initial=0.0))
        return self._lifted(
            lambda s: m2mul(Mg, self.matrix(s.reshape((-1,) + (1,) * (h.ndim - 1) + (1,)) * h)),
            g[..., 2], ext)

    def inv(self, g):
        g = np.asarray(g, dtype=float)
        ext = float(np.max(np.linalg.norm(g, axis=-1), initial=0.0))
        return self._lifted(
            lambda s: m2inv_sl(self.matrix(s.reshape((-1,) + (1,) * g.ndim) * g)),
            np.zeros(g.shape[:-1]), ext)

    def path_product(self, x0, x1):
        """Lifted ``x0^{-1} x1`` through the path ``s -> (s x0)^{-1} (s x1)``."""
        x0, x1 = np.broadcast_arrays(np.asarray(x0, dtype=float), np.asarray(x1, dtype=float))
        ext = float(np.max(np.linalg.norm(x0, axis=-1) + np.linalg.norm(x1, axis=-1), initial=0.0))
        sh = lambda s: s.reshape((-1,) + (1,) * x0.ndim)
        return self._lifted(
            lambda s: m2mul(m2inv_sl(self.matrix(sh(s) * x0)), self.matrix(sh(s) * x1)),
            np.zeros(x0.shape[:-1]), ext)

    def coframe(self, x):
        x = np.asarray(x, dtype=float)
        G = self.matrix(x)
        Ginv = m2inv_sl(G)
        M = np.empty((3, 3))
        h = 1e-30
        for mu in range(3):
            xc = x.astype(complex)
            xc[mu] += 1j * h
            dG = np.imag(self.matrix(xc)) / h
            M[mu] = self.matrix_to_alg(Ginv @ dG)
        return M

    def rk_pos(self, g):
        return self.matrix(g).reshape(4)

    def rk_pos_rhs(self, pos, coeffs):
        return (pos.reshape(2, 2) @ self.alg_matrix(coeffs)).reshape(4)

    def rk_finish(self, g0, positions):
        mats = np.asarray(positions).reshape(-1, 2, 2)
        ch, jump = self.lift_path(mats, float(np.asarray(g0)[2]))
        if not jump < 0.5:
            raise RuntimeError("dense output too coarse for theta lift")
        return ch

    def flow(self, a0, p, eps, t=1.0):
        a0 = np.asarray(a0, dtype=float)
        p = np.asarray(p, dtype=float)
        t = np.asarray(t, dtype=float)
        d = self.delta
        b = eps * p
        omega = p * (eps * d - 1.0)
        beta = -omega / d
        eta = np.concatenate([a0, (b + beta)[..., None]], axis=-1)
        eta, tt, bb = np.broadcast_arrays(eta, t[..., None], beta[..., None])
        tt = tt[..., 0]
        bb = bb[..., 0]
        te = tt[..., None] * eta
        ext = np.linalg.norm(te[..., :2], axis=-1) + 2.0 * np.abs(te[..., 2])
        big = np.linalg.norm(te[..., :2], axis=-1) > self._MAX_EXTENT
        te = np.where(big[..., None], 0.0, te)
        # lift each extent bucket on its own grid so one long path does not
        # force fine sampling on the whole batch
        flat = te.reshape(-1, 3)
        bucket = np.ceil(np.log2(1.0 + np.minimum(ext, self._MAX_EXTENT))).reshape(-1)
        ch = np.empty_like(flat)
        for b in np.unique(bucket):
            idx = np.nonzero(bucket == b)[0]
            sub = flat[idx]
            ch[idx] = self._lifted(lambda s: self.expm(s[:, None, None] * sub),
                                   np.zeros(idx.size), 2.0 ** b - 1.0)
        ch = ch.reshape(te.shape)
        ch[big] = np.nan
        ch[..., 2] -= tt * bb
        return ch


def make_backend(kind: str, n: int) -> Backend:
    k = kind.lower()
    if k in ("heisenberg", "h"):
        return HeisenbergBackend(n)
    if k in ("hopf", "hopfsphere", "sphere"):
        return HopfBackend(n)
    if k in ("ads", "antidesitter", "anti-de-sitter"):
        return AdSBackend(n)
    raise ValueError(f"unsupported model kind {kind!r}")
