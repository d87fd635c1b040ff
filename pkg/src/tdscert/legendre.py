"""Shifted Legendre polynomials on ``[-h, 0]`` and exponential moment tables.

The moments are::

    Gamma_k      = int_{-h}^0 e^{(h+t)M} l_k(t) dt
    GammaBar_jk  = int_{-h}^0 int_{-h}^{t1} e^{(t1-t2)M} l_k(t2) l_j(t1) dt2 dt1
    GammaFlat_jk = (-1)^(j+k) GammaBar_jk

Both families obey three-term relations in ``k``::

    Gamma_k    = Gamma_{k-2} - (2(2k-1)/h) M^{-1} Gamma_{k-1}
    GammaBar_jk = GammaBar_{j,k-2} + (2(2k-1)/h) M^{-1} GammaBar_{j,k-1}
                  - M^{-1} h/(2j+1) (delta_jk - delta_{j,k-2})

Marching these forward in ``k`` (``method="forward"``) multiplies rounding
errors by roughly ``4k / (h |lambda(M)|)`` per step, so it is only usable for
``k`` of the order of ``h |M|``.  The default ``method="stable"`` solves the
very same relations, multiplied through by ``M``, as a block-tridiagonal
boundary-value problem: the ``k = 0`` moment is prescribed and the moments
are required to vanish beyond a truncation index ``K`` (they decay
super-geometrically).  No inverse of ``M`` is needed, so singular ``M`` is
handled too.
"""

import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.polynomial.legendre import leggauss

from ._config import DEFAULT_CONFIG
from .exceptions import DimensionMismatch, OutOfRange, PrecisionLoss, SingularM, SingularMatrix
from .numerics import mat_exp, solve_linear
from .validation import check_delay, check_square

__all__ = [
    "LegendreBasis",
    "LegendreTable",
    "legendre_values",
    "gamma_sequence",
    "gamma_bar_table",
    "gamma_flat",
    "quadrature_gamma",
    "quadrature_gamma_bar",
    "quadrature_gamma_bar_nested",
    "build_legendre_table",
]


def legendre_values(n, h, taus):
    """Array ``L[k, i] = l_k(taus[i])`` for ``k < n`` (three-term recurrence)."""
    taus = np.asarray(taus, dtype=np.float64)
    x = (2.0 * taus + h) / h
    L = np.empty((n,) + taus.shape)
    if n == 0:
        return L
    L[0] = 1.0
    if n > 1:
        L[1] = x
    for k in range(1, n - 1):
        L[k + 1] = ((2 * k + 1) * x * L[k] - k * L[k - 1]) / (k + 1)
    return L


@dataclass(frozen=True)
class LegendreBasis:
    """Polynomials ``l_0 .. l_{n-1}`` on ``[-h, 0]`` with ``l_k(0) = 1``."""

    h: float
    n: int

    def __post_init__(self):
        object.__setattr__(self, "h", check_delay(self.h))
        if int(self.n) < 1:
            raise ValueError(f"basis size must be positive, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    def _check(self, k, tau):
        if not 0 <= k < self.n:
            raise OutOfRange(f"index {k} outside 0..{self.n - 1}")
        # allow a few ulps of slack at the interval ends
        slack = 4 * np.finfo(float).eps * self.h
        if not -self.h - slack <= tau <= slack:
            raise OutOfRange(f"tau={tau} outside [-{self.h}, 0]")

    def eval(self, k, tau):
        self._check(k, tau)
        return float(legendre_values(k + 1, self.h, tau)[k])

    def eval_binomial(self, k, tau):
        """Direct alternating binomial sum; loses precision for ``k`` beyond ~20."""
        self._check(k, tau)
        t = (tau + self.h) / self.h
        total = sum((-1) ** j * math.comb(k, j) * math.comb(k + j, j) * t**j for j in range(k + 1))
        return float((-1) ** k * total)

    def values(self, taus):
        return legendre_values(self.n, self.h, taus)

    def gram_diagonal(self):
        """Diagonal of ``int l_k l_k``: ``h / (2k + 1)``."""
        return self.h / (2.0 * np.arange(self.n) + 1.0)


@dataclass(frozen=True, eq=False)
class LegendreTable:
    """Moment tables; with a right factor ``R`` they hold ``Gamma_k R`` and ``GammaBar_jk R``."""

    Gamma: np.ndarray  # (n, d, c)
    GammaBar: np.ndarray  # (n, n, d, c)
    h: float
    M_used: np.ndarray
    method: str
    truncation: int = 0
    deviation: float = 0.0
    right: np.ndarray | None = None

    @property
    def n(self):
        return self.Gamma.shape[0]

    def gamma_flat(self, j, k):
        return gamma_flat(self.GammaBar, j, k)


def gamma_flat(GammaBar, j, k):
    n = GammaBar.shape[0]
    if not (0 <= j < n and 0 <= k < n):
        raise OutOfRange(f"({j}, {k}) outside the {n}x{n} table")
    return (-1) ** (j + k) * GammaBar[j, k]


# --- closed-form low-order moments -------------------------------------------


def _low_moments(M, h):
    """``Gamma_0, Gamma_1, GammaBar_00, GammaBar_01, GammaBar_11`` from one block exponential.

    The block ``(0, p+1)`` of ``exp(h C)``, with ``C`` the Jordan-chain
    augmentation of ``M``, is ``int_0^h e^{sM} (h-s)^p / p! ds``; every low
    moment is a polynomial combination of these.  No inverse of ``M`` enters.
    """
    d = M.shape[0]
    P = 4
    C = np.zeros(((P + 1) * d, (P + 1) * d))
    C[:d, :d] = M
    for q in range(P):
        C[q * d : (q + 1) * d, (q + 1) * d : (q + 2) * d] = np.eye(d)
    F = mat_exp(h * C)
    V = [math.factorial(p) * F[:d, (p + 1) * d : (p + 2) * d] / h**p for p in range(P)]  # int e^{sM} u^p, u = (h-s)/h

    def lag(j, k):
        # W_jk as a polynomial in u, fitted exactly from the Gauss-integrated lag weights
        deg = j + k + 1
        u = 0.5 * (1.0 - np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1)))
        w = _lag_weights(h, 2, h * (1.0 - u), 3)[:, j, k]
        coef = np.linalg.solve(np.vander(u, deg + 1, increasing=True), w)
        return sum(c * V[p] for p, c in enumerate(coef))

    G0 = V[0]
    G1 = V[0] - 2.0 * V[1]
    return G0, G1, lag(0, 0), lag(0, 1), lag(1, 1)


def _inverse_M(M, config):
    try:
        Minv, rcond = solve_linear(M, np.eye(M.shape[0]), config.singular_m_rcond)
    except SingularMatrix as exc:
        raise SingularM(f"M is singular (rcond={exc.rcond:.3e}); recursions need M invertible", exc.rcond) from None
    return Minv


# --- forward marching ---------------------------------------------------------


def _forward_gamma(M, h, n, Minv):
    d = M.shape[0]
    I = np.eye(d)
    E = mat_exp(h * M)
    G = np.empty((n, d, d))
    G[0] = Minv @ (E - I)
    if n > 1:
        G[1] = Minv @ (E + I) - (2.0 / h) * Minv @ G[0]
    for k in range(2, n):
        G[k] = G[k - 2] - (2.0 * (2 * k - 1) / h) * Minv @ G[k - 1]
    return G


def _forward_gamma_bar(M, h, n, Gamma, Minv):
    d = M.shape[0]
    I = np.eye(d)
    T = np.zeros((n, n, d, d))
    T[0, 0] = Minv @ (Gamma[0] - h * I)
    if n > 1:
        T[0, 1] = -Minv @ Gamma[1]
        T[1, 0] = -T[0, 1]
        T[1, 1] = Minv @ (((2.0 / h) * Minv - I) @ Gamma[1] - (h / 3.0) * I)
    for j in range(n):
        for k in range(j):
            T[j, k] = (-1) ** (j + k) * T[k, j]
        s = h / (2 * j + 1)
        for k in range(max(2, j), n):
            if (j, k) in ((0, 0), (0, 1), (1, 1)):
                continue
            forcing = (float(j == k) - float(j == k - 2)) * s
            T[j, k] = T[j, k - 2] + (2.0 * (2 * k - 1) / h) * Minv @ T[j, k - 1] - forcing * Minv
    return T


# --- boundary-value solve -----------------------------------------------------


def _truncation_index(M, h, n, tol):
    """First index where ``(h rho)^k / (2k+1)!!`` falls ``tol`` below its peak, plus ``n``."""
    rho = float(np.max(np.abs(np.linalg.eigvals(M)))) if M.size else 0.0
    x = h * rho
    k, log_t, peak = 0, 0.0, 0.0
    log_tol = math.log(tol)
    while x > 0:
        k += 1
        log_t += math.log(x) - math.log(2 * k + 1)
        peak = max(peak, log_t)
        if log_t < peak + log_tol and k >= 4:
            break
    return n + k + 8


def _cmul_real(Z, X):
    """``Z @ X`` for complex ``Z`` and real ``X`` through two real BLAS products."""
    return (Z.real @ X) + 1j * (Z.imag @ X)


class _ThreeTermSolver:
    """Decaying solution of ``c_k x_{k-1} + s M x_k - s M x_{k-2} = f_k``, ``k = 2..K+1``.

    ``c_k = 2(2k-1)/h``, ``s = +-1``; ``x_0`` is prescribed and ``x_{K+1} = 0``.
    With the complex Schur form ``M = Z T Z^H`` the block system becomes one
    scalar tridiagonal problem per diagonal entry of ``T``, solved bottom-up
    with the strictly upper part of ``T`` moved to the right-hand side.
    """

    def __init__(self, M, h, sign, K):
        d = M.shape[0]
        self.d, self.K, self.sign, self.M = d, K, sign, M
        self.T, self.Z = scipy.linalg.schur(M.astype(complex), output="complex")
        self.c = 2.0 * (2.0 * np.arange(2, K + 2) - 1.0) / h  # c_{j+1} for unknown j = 1..K
        # Scalar moments l_0, l_1 of e^{s lam}: the decaying solution is
        # normalised at whichever of the two is larger.  Prescribing index 0
        # alone is singular when e^{h lam} = 1.
        lam = np.diag(self.T)
        q = 32 + int(np.ceil(h * np.max(np.abs(lam), initial=0.0)))
        u, w = _gauss(0.0, 1.0, q)
        e = np.exp(h * np.outer(lam, u))
        self.anchor_one = np.abs(e @ (w * (2.0 * u - 1.0))) > np.abs(e @ w)

    def _banded(self, lam, c):
        s = self.sign
        ab = np.zeros((3, c.size), dtype=complex)
        ab[0, 1:] = s * lam  # coefficient of y_{j+1}
        ab[1] = c
        ab[2, :-1] = -s * lam  # coefficient of y_{j-1}
        return ab

    def solve(self, x0, forcing=(), x1=None, block=8):
        """``forcing`` is an iterable of ``(k, column_slice, block)`` additions to ``f_k``.

        With ``x1`` (the exact second term) rows flagged in ``anchor_one`` are
        solved from index 1 and drop the ``k = 2`` relation.
        """
        d, K, s = self.d, self.K, self.sign
        cols = x0.shape[1]
        f = np.zeros((d, K, cols))
        for k, sl, blk in forcing:
            if 2 <= k <= K + 1:
                f[:, k - 2, sl] += blk
        Zh = self.Z.conj().T
        g = _cmul_real(Zh, f.reshape(d, K * cols)).reshape(d, K, cols)
        y0 = _cmul_real(Zh, x0)
        y1 = None if x1 is None else _cmul_real(Zh, x1)
        g[:, 0] += s * np.diag(self.T)[:, None] * y0
        # D_l = y_{j+1} - y_{j-1} for j = 1..K (with y_0 given, y_{K+1} = 0)
        y = np.zeros((d, K, cols), dtype=complex)
        D = np.zeros((d, K * cols), dtype=complex)
        T = self.T
        for hi in range(d, 0, -block):
            lo = max(0, hi - block)
            if hi < d:
                g[lo:hi] -= s * (T[lo:hi, hi:] @ D[hi:]).reshape(hi - lo, K, cols)
            for i in range(hi - 1, lo - 1, -1):
                rhs = g[i]
                if i + 1 < hi:
                    rhs = rhs - s * (T[i, i + 1 : hi] @ D[i + 1 : hi]).reshape(K, cols)
                lam = T[i, i]
                if y1 is not None and self.anchor_one[i]:
                    rhs = rhs[1:].copy()
                    rhs[0] += s * lam * y1[i]
                    yi = np.empty((K, cols), dtype=complex)
                    yi[0] = y1[i]
                    yi[1:] = scipy.linalg.solve_banded(
                        (1, 1), self._banded(lam, self.c[1:]), rhs, check_finite=False
                    )
                else:
                    yi = scipy.linalg.solve_banded((1, 1), self._banded(lam, self.c), rhs, check_finite=False)
                y[i] = yi
                Di = D[i].reshape(K, cols)
                Di[:-1] = yi[1:]
                Di[-1] = 0.0
                Di[1:] -= yi[:-1]
                Di[0] -= y0[i]
        x = np.empty((K + 1, d, cols))
        x[0] = x0
        yr = y.reshape(d, K * cols)
        xr = self.Z.real @ yr.real - self.Z.imag @ yr.imag
        x[1:] = xr.reshape(d, K, cols).transpose(1, 0, 2)
        return x


def _tail_ratio(seq):
    norms = np.linalg.norm(seq.reshape(seq.shape[0], -1), axis=1)
    scale = norms.max()
    return 0.0 if scale == 0 else float(norms[-4:].max() / scale)


def _stable_tables(M, h, n, config, with_bar=True, R=None):
    d = M.shape[0]
    I = np.eye(d) if R is None else R
    c = I.shape[1]
    G0, G1, B00, B01, B11 = (X @ I for X in _low_moments(M, h))
    K = _truncation_index(M, h, n, config.truncation_tol)
    for _ in range(6):
        sol_g = _ThreeTermSolver(M, h, +1, K).solve(G0, x1=G1)
        if not with_bar:
            if _tail_ratio(sol_g) < 1e-12:
                return sol_g[:n], None, K
            K = int(K * 1.5) + 8
            continue
        bar = _ThreeTermSolver(M, h, -1, K)
        row0 = bar.solve(B00, [(2, slice(None), -h * I)], x1=B01)
        T = np.zeros((n, n, d, c))
        T[0] = row0[:n]
        tails = [_tail_ratio(sol_g), _tail_ratio(row0)]
        if n > 1:
            row1 = bar.solve(-B01, [(3, slice(None), -(h / 3.0) * I)], x1=B11)
            T[1, 1:] = row1[1:n]
            tails.append(_tail_ratio(row1))
        if n > 2:
            # rows j >= 2 start from GammaBar_j0, GammaBar_j1 given by rows 0 and 1
            x0 = np.concatenate([(-1) ** j * row0[j] for j in range(2, n)], axis=1)
            x1 = np.concatenate([(-1) ** (j + 1) * row1[j] for j in range(2, n)], axis=1)
            forcing = []
            for j in range(2, n):
                sl = slice((j - 2) * c, (j - 1) * c)
                s = h / (2 * j + 1)
                forcing.append((j, sl, s * I))
                forcing.append((j + 2, sl, -s * I))
            rows = bar.solve(x0, forcing, x1=x1)
            for j in range(2, n):
                T[j, j:] = rows[j:n, :, (j - 2) * c : (j - 1) * c]
            tails.append(_tail_ratio(rows))
        # lower triangle from the symmetry relation
        for j in range(1, n):
            for k in range(j):
                T[j, k] = (-1) ** (j + k) * T[k, j]
        if max(tails) < 1e-12:
            return sol_g[:n], T, K
        K = int(K * 1.5) + 8
    raise PrecisionLoss(f"moment sequence did not decay before truncation index {K}")


def gamma_sequence(M, h, n, method=None, config=None):
    """``Gamma_0 .. Gamma_{n-1}`` as an array of shape ``(n, d, d)``."""
    config = config or DEFAULT_CONFIG
    method = method or config.table_method
    M = check_square(M, "M")
    h = check_delay(h)
    if method == "forward":
        return _forward_gamma(M, h, n, _inverse_M(M, config))
    if method == "stable":
        return _stable_tables(M, h, n, config, with_bar=False)[0]
    if method == "quadrature":
        return quadrature_gamma(M, h, n, _default_nodes(M, h, n, config))
    raise ValueError(f"unknown method {method!r}")


def gamma_bar_table(M, h, n, Gamma=None, method=None, config=None):
    """Full ``n x n`` table of ``GammaBar_jk``, shape ``(n, n, d, d)``."""
    config = config or DEFAULT_CONFIG
    method = method or config.table_method
    M = check_square(M, "M")
    h = check_delay(h)
    if method == "forward":
        Minv = _inverse_M(M, config)
        Gamma = _forward_gamma(M, h, max(n, 2), Minv) if Gamma is None else Gamma
        return _forward_gamma_bar(M, h, n, Gamma, Minv)
    if method == "stable":
        return _stable_tables(M, h, n, config)[1]
    if method == "quadrature":
        return quadrature_gamma_bar(M, h, n, nodes=_default_nodes(M, h, n, config))
    raise ValueError(f"unknown method {method!r}")


# --- quadrature oracles -------------------------------------------------------


@functools.lru_cache(maxsize=64)
def _leggauss(q):
    x, w = leggauss(q)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _gauss(a, b, q):
    x, w = _leggauss(q)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def _default_nodes(M, h, n, config):
    return max(config.quad_nodes, n + int(math.ceil(h * np.linalg.norm(M, 2))) + 16)


def quadrature_gamma(M, h, n, nodes=64, _exps=None):
    """Gauss-Legendre quadrature of ``Gamma_0 .. Gamma_{n-1}``.

    Accuracy degrades once ``h |M|`` approaches the node count.
    """
    M = np.asarray(M, dtype=np.float64)
    s, w = _gauss(0.0, h, nodes)
    E = mat_exp(s[:, None, None] * M) if _exps is None else _exps
    L = legendre_values(n, h, s - h) * w
    return (L @ E.reshape(nodes, -1)).reshape((n,) + E.shape[1:])


def _lag_weights(h, n, s, p):
    """``W[i, j, k] = int_{-h}^{-s_i} l_j(t + s_i) l_k(t) dt`` (exact for degree < 2p)."""
    q = s.size
    x, w = _leggauss(p)
    a, b = -h, -s
    half = 0.5 * (b - a)  # (q,)
    t = a + half[:, None] * (x[None, :] + 1.0)  # (q, p)
    wt = half[:, None] * w[None, :]
    Lk = legendre_values(n, h, t)  # (n, q, p)
    Lj = legendre_values(n, h, np.minimum(t + s[:, None], 0.0))
    return np.einsum("jqp,kqp,qp->qjk", Lj, Lk, wt).reshape(q, n, n)


def quadrature_gamma_bar(M, h, n, rows=None, nodes=64, _exps=None):
    """Quadrature of ``GammaBar_jk`` for ``j`` in ``rows`` (default: all), shape ``(len(rows), n, d, d)``.

    Uses the lag variable ``s = t1 - t2``: the polynomial inner factor is
    integrated exactly and only the exponential factor is sampled, so this
    costs ``nodes`` matrix exponentials.
    """
    M = np.asarray(M, dtype=np.float64)
    rows = list(range(n)) if rows is None else list(rows)
    s, w = _gauss(0.0, h, nodes)
    E = mat_exp(s[:, None, None] * M) if _exps is None else _exps
    shape = E.shape[1:]
    E = E.reshape(nodes, -1)
    W = _lag_weights(h, n, s, n + 2) * w[:, None, None]
    out = np.empty((len(rows), n) + shape)
    for r, j in enumerate(rows):
        out[r] = (W[:, j, :].T @ E).reshape((n,) + shape)
    return out


def quadrature_gamma_bar_nested(M, h, j, k, nodes=64, flat=False):
    """Nested tensor Gauss-Legendre quadrature of one ``GammaBar_jk`` (or ``GammaFlat_jk``)."""
    M = np.asarray(M, dtype=np.float64)
    d = M.shape[0]
    t1, w1 = _gauss(-h, 0.0, nodes)
    x, w = _leggauss(nodes)
    if flat:
        lo, hi = t1, np.zeros_like(t1)
    else:
        lo, hi = np.full_like(t1, -h), t1
    half = 0.5 * (hi - lo)
    t2 = lo[:, None] + half[:, None] * (x[None, :] + 1.0)
    w2 = half[:, None] * w[None, :]
    lag = (t2 - t1[:, None]) if flat else (t1[:, None] - t2)
    E = mat_exp(lag.reshape(-1)[:, None, None] * M).reshape(nodes, nodes, d, d)
    n = max(j, k) + 1
    lj = legendre_values(n, h, t1)[j]
    lk = legendre_values(n, h, t2)[k]
    weights = (w1 * lj)[:, None] * w2 * lk
    return np.einsum("ab,abde->de", weights, E)


# --- table construction with validation --------------------------------------


def _validate(M, h, Gamma, GammaBar, config, R=None):
    """Largest scaled deviation of the table from quadrature on rows 0, n//2, n-1.

    Deviations are divided by ``h max_s |e^{sM} R|`` (``h^2 ...`` for ``GammaBar``).
    """
    n = Gamma.shape[0]
    q = _default_nodes(M, h, n, config)
    s, _ = _gauss(0.0, h, q)
    E = mat_exp(s[:, None, None] * M)
    if R is not None:
        E = E @ R
    scale = max(float(np.max(np.linalg.norm(E, 2, axis=(1, 2)))), 1e-300)
    dev = np.max(np.abs(Gamma - quadrature_gamma(M, h, n, q, E))) / (h * scale)
    if GammaBar is not None:
        rows = sorted({0, n // 2, n - 1})
        ref = quadrature_gamma_bar(M, h, n, rows, q, E)
        dev = max(dev, np.max(np.abs(GammaBar[rows] - ref)) / (h * h * scale))
    return float(dev)


def build_legendre_table(M, h, n, config=None, method=None, right=None):
    """Moment tables up to order ``n`` (indices ``0..n-1``).

    ``method``: ``"stable"`` (default), ``"forward"`` (falls back to
    quadrature when ``M`` is singular) or ``"quadrature"``.  With a right
    factor ``right`` (a vector or a ``d x c`` matrix) only the products
    ``Gamma_k right`` and ``GammaBar_jk right`` are formed, which is all the
    certificate needs and is ``d / c`` times cheaper.  With
    ``config.validate_tables`` the result is checked against quadrature and
    :class:`PrecisionLoss` is raised beyond ``config.precision_loss_tol``.
    """
    config = config or DEFAULT_CONFIG
    method = method or config.table_method
    M = check_square(M, "M")
    h = check_delay(h)
    n = int(n)
    if n < 1:
        raise ValueError(f"table order must be positive, got {n}")
    R = None
    if right is not None:
        R = np.asarray(right, dtype=np.float64)
        R = R.reshape(-1, 1) if R.ndim == 1 else R
        if R.shape[0] != M.shape[0] or not np.all(np.isfinite(R)):
            raise DimensionMismatch(f"right factor of shape {R.shape} does not fit M of size {M.shape[0]}")
    K = 0
    if method == "forward":
        try:
            Minv = _inverse_M(M, config)
        except SingularM:
            method = "quadrature"
        else:
            Gamma = _forward_gamma(M, h, max(n, 2), Minv)
            GammaBar = _forward_gamma_bar(M, h, n, Gamma, Minv)
            Gamma = Gamma[:n]
            if R is not None:
                Gamma, GammaBar = Gamma @ R, GammaBar @ R
    if method == "stable":
        Gamma, GammaBar, K = _stable_tables(M, h, n, config, R=R)
    elif method == "quadrature":
        q = _default_nodes(M, h, n, config)
        s, _ = _gauss(0.0, h, q)
        E = mat_exp(s[:, None, None] * M)
        if R is not None:
            E = E @ R
        Gamma = quadrature_gamma(M, h, n, q, E)
        GammaBar = quadrature_gamma_bar(M, h, n, nodes=q, _exps=E)
    elif method != "forward":
        raise ValueError(f"unknown method {method!r}")
    deviation = 0.0
    if config.validate_tables and method != "quadrature":
        deviation = _validate(M, h, Gamma, GammaBar, config, R)
        if not deviation <= config.precision_loss_tol:
            raise PrecisionLoss(
                f"{method} moment table deviates from quadrature by {deviation:.3e} "
                f"(tolerance {config.precision_loss_tol:.1e})",
                deviation,
            )
    return LegendreTable(Gamma, GammaBar, h, M, method, K, deviation, R)
