"""Time-delay systems, the delay Lyapunov matrix and the order-bound constants.

The system is ``x'(t) = A x(t) + Ad x(t - h)``.  Its delay Lyapunov matrix
``U`` is obtained from the exponential of the ``2m^2``-dimensional matrix
``M`` and the boundary matrix ``N``; the constants ``r, b0, eta0, kappa1,
kappa2`` then give the certified order ``n_star`` of the Legendre test.
"""

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from ._config import DEFAULT_CONFIG
from .exceptions import DomainError, LyapunovConditionViolated, OrderTooLarge, OutOfRange, SingularMatrix
from .numerics import bisect_root, lambert_w0, mat_exp, solve_linear, spectral_norm, unvec, vec
from .validation import check_delay, check_same_size, check_square

__all__ = [
    "TimeDelaySystem",
    "LyapunovOperatorData",
    "BoundConstants",
    "build_MN",
    "eval_U",
    "compute_r",
    "compute_b0_eta0",
    "compute_kappas",
    "epsilon_of_eta",
    "log_epsilon_of_eta",
    "order_estimate",
    "compute_n_star",
]


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeDelaySystem:
    """``x'(t) = A x(t) + Ad x(t - h)`` with state dimension ``m``."""

    A: np.ndarray
    Ad: np.ndarray
    h: float
    name: str = ""

    def __post_init__(self):
        A = check_square(self.A, "A")
        Ad = check_square(self.Ad, "Ad")
        check_same_size(A, Ad, names=["A", "Ad"])
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "Ad", _frozen(Ad))
        object.__setattr__(self, "h", check_delay(self.h))

    @property
    def m(self):
        return self.A.shape[0]

    def with_delay(self, h):
        return TimeDelaySystem(self.A, self.Ad, h, self.name)

    def fingerprint(self):
        digest = hashlib.sha256()
        for part in (self.A, self.Ad, np.array([self.h])):
            digest.update(np.ascontiguousarray(part, dtype="<f8").tobytes())
        return digest.hexdigest()[:16]

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"TimeDelaySystem{label}(m={self.m}, h={self.h!r})"


@dataclass(frozen=True, eq=False)
class LyapunovOperatorData:
    M: np.ndarray
    N: np.ndarray
    u: np.ndarray
    expM_h: np.ndarray
    rcond_N: float
    h: float
    m: int
    residual: float = field(default=0.0)

    def U(self, tau):
        return eval_U(self, tau)


@dataclass(frozen=True)
class BoundConstants:
    r: float
    mu: float
    rho: float
    b0: float
    eta0: float
    kappa1: float
    kappa2: float
    eps_star: float
    n_star: int
    log_eta0: float
    log_eps_star: float
    kappa_grid: int

    def as_dict(self):
        return {
            "r": self.r,
            "mu": self.mu,
            "rho": self.rho,
            "b0": self.b0,
            "eta0": self.eta0,
            "kappa1": self.kappa1,
            "kappa2": self.kappa2,
            "eps_star": self.eps_star,
        }


def build_MN(sys, config=None):
    """Assemble ``M``, ``N``, solve ``N u = [-vec(I); 0]`` and cache ``e^{hM}``."""
    config = config or DEFAULT_CONFIG
    A, Ad, h, m = sys.A, sys.Ad, sys.h, sys.m
    I = np.eye(m)
    I2 = np.eye(m * m)
    Z = np.zeros((m * m, m * m))
    M = np.block(
        [
            [np.kron(A.T, I), np.kron(Ad.T, I)],
            [-np.kron(I, Ad.T), -np.kron(I, A.T)],
        ]
    )
    E = mat_exp(h * M)
    N = np.block([[np.kron(A.T, I) + np.kron(I, A.T), np.kron(Ad.T, I)], [I2, Z]])
    N = N + np.block([[np.kron(I, Ad.T), Z], [Z, -I2]]) @ E
    rhs = np.concatenate([-vec(I), np.zeros(m * m)])
    try:
        u, rcond = solve_linear(N, rhs, config.singular_rcond)
    except SingularMatrix as exc:
        raise LyapunovConditionViolated(
            "Lyapunov condition violated: N is singular (rcond="
            f"{exc.rcond:.3e}); the system has characteristic roots s1, s2 with "
            "s1 + s2 = 0, so the delay Lyapunov matrix is not unique",
            exc.rcond,
        ) from None
    residual = float(np.linalg.norm(N @ u - rhs) / max(np.linalg.norm(u) * np.linalg.norm(N, 2), 1e-300))
    return LyapunovOperatorData(
        M=_frozen(M), N=_frozen(N), u=_frozen(u), expM_h=_frozen(E), rcond_N=rcond, h=h, m=m, residual=residual
    )


def eval_U(data, tau):
    """Delay Lyapunov matrix ``U(tau)`` for ``tau`` in ``[-h, h]``."""
    tau = float(tau)
    h, m = data.h, data.m
    if not -h <= tau <= h:
        raise OutOfRange(f"tau={tau} outside [-{h}, {h}]")
    m2 = m * m
    if tau >= 0:
        v = (mat_exp(tau * data.M) @ data.u)[:m2]
    else:
        v = (mat_exp((h + tau) * data.M) @ data.u)[m2:]
    return unvec(v, m, m)


def compute_r(sys):
    return spectral_norm(sys.A) + spectral_norm(sys.Ad)


def _g(b, hr):
    return math.sin(b) ** 4 * (hr * hr + b * b) - hr * hr


def compute_b0_eta0(sys, r, config=None):
    """Root ``b0`` of ``sin^4(b)((hr)^2 + b^2) - (hr)^2`` and ``eta0``."""
    config = config or DEFAULT_CONFIG
    b0, _, eta0 = _b0_eta0(sys.h, r, config)
    return b0, eta0


def _b0_eta0(h, r, config):
    if not r > 0:
        raise DomainError(f"r = |A| + |Ad| must be positive, got {r}")
    hr = h * r
    b0 = bisect_root(lambda b: _g(b, hr), 0.0, math.pi / 2, config.bisect_tol)
    log_eta0 = -2.0 * r * h - math.log(4.0 * r) + 2.0 * math.log(math.cos(b0))
    return b0, log_eta0, math.exp(log_eta0)


def _orbit_top_bottom(data, s_values, refresh):
    """Stack ``e^{sM} u`` for equally spaced ``s_values`` by repeated stepping."""
    s_values = np.asarray(s_values, dtype=np.float64)
    out = np.empty((s_values.size, data.u.size))
    if s_values.size == 0:
        return out
    step = mat_exp((s_values[1] - s_values[0]) * data.M) if s_values.size > 1 else None
    for i, s in enumerate(s_values):
        if i % refresh == 0:
            v = mat_exp(s * data.M) @ data.u
        else:
            v = step @ v
        out[i] = v
    return out


def _U_stack(data, taus, refresh):
    """``U(tau)`` for equally spaced ``taus`` in ``[-h, h]``; shape ``(len, m, m)``."""
    m, h, m2 = data.m, data.h, data.m * data.m
    taus = np.asarray(taus)
    neg = taus < 0
    vals = np.empty((taus.size, m2))
    if np.any(neg):
        vals[neg] = _orbit_top_bottom(data, h + taus[neg], refresh)[:, m2:]
    if np.any(~neg):
        vals[~neg] = _orbit_top_bottom(data, taus[~neg], refresh)[:, :m2]
    return vals.reshape(-1, m, m).transpose(0, 2, 1)


def compute_kappas(data, Ad, grid=None, refresh=None, config=None):
    """Grid maxima ``kappa1 = max_[0,h] |U Ad|`` and ``kappa2 = max_[-h,h] |Ad^T U Ad|``."""
    config = config or DEFAULT_CONFIG
    grid = config.kappa_grid if grid is None else int(grid)
    refresh = config.kappa_refresh if refresh is None else int(refresh)
    Ad = np.asarray(Ad, dtype=np.float64)
    if not np.any(Ad):
        return 0.0, 0.0
    h = data.h
    U1 = _U_stack(data, np.linspace(0.0, h, grid), refresh)
    U2 = _U_stack(data, np.linspace(-h, h, grid), refresh)
    kappa1 = float(np.max(np.linalg.norm(U1 @ Ad, 2, axis=(1, 2))))
    kappa2 = float(np.max(np.linalg.norm(Ad.T @ U2 @ Ad, 2, axis=(1, 2))))
    return kappa1, kappa2


def epsilon_of_eta(eta, h, kappa1, kappa2):
    """Positive root ``E(eta)`` of the quadratic residual constraint.

    Evaluated in the rationalized form ``c / (a + sqrt(a^2 + c))`` which is
    free of cancellation when ``eta`` is tiny.
    """
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    a = (kappa1 + kappa2) / (kappa2 + 1.0)
    c = eta / (h * (kappa2 + 1.0))
    return c / (a + math.sqrt(a * a + c))


def log_epsilon_of_eta(log_eta, h, kappa1, kappa2):
    """``log E(eta)`` from ``log eta``; stays finite when ``eta`` underflows."""
    a = (kappa1 + kappa2) / (kappa2 + 1.0)
    log_c = log_eta - math.log(h * (kappa2 + 1.0))
    if a == 0.0:
        return 0.5 * log_c
    c = math.exp(log_c) if log_c < 700 else math.inf
    if math.isinf(c):
        return 0.5 * log_c
    return log_c - math.log(a + math.sqrt(a * a + c))


def _log_rho(mu):
    cm = math.ceil(mu)
    return (
        0.5 * math.log(2.0 * cm / math.pi**3)
        - 2.0 * math.log(mu)
        + (cm + 0.5) * (math.log(mu) + 1.0 - math.log(cm + 0.5))
    )


def rho_of_mu(mu):
    return math.exp(_log_rho(mu))


def order_estimate(eps=None, mu=None, *, log_eps=None, config=None):
    """Order ``N(eps)`` guaranteeing a Legendre residual below ``eps``.

    ``N = max(4, ceil(3/2 + mu * e^{1 + W(-log(rho eps) / (mu e))}))``.  When
    ``rho * eps >= 1`` the Lambert argument is non-positive and 4 is returned.
    """
    if mu is None or not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if log_eps is None:
        if eps is None or not eps > 0:
            raise ValueError(f"eps must be positive, got {eps}")
        log_eps = math.log(eps)
    z = -(_log_rho(mu) + log_eps) / (mu * math.e)
    if z <= 0:
        return 4
    w = lambert_w0(z, config.lambert_max_iter if config else None, config.lambert_tol if config else None)
    # e^{W(z)} = z / W(z) avoids overflow for large z
    ew = z / w if w > 0 else 1.0
    bound = 1.5 + mu * math.e * ew
    if not math.isfinite(bound):
        return math.inf
    return max(4, math.ceil(bound))


def compute_n_star(sys, data=None, config=None):
    """All constants of the certified order ``n_star = N(E(eta0))``."""
    config = config or DEFAULT_CONFIG
    data = data if data is not None else build_MN(sys, config)
    r = compute_r(sys)
    h = sys.h
    b0, log_eta0, eta0 = _b0_eta0(h, r, config)
    kappa1, kappa2 = compute_kappas(data, sys.Ad, config=config)
    log_eps = log_epsilon_of_eta(log_eta0, h, kappa1, kappa2)
    mu = h * r / 2.0
    n_star = order_estimate(mu=mu, log_eps=log_eps, config=config)
    constants = BoundConstants(
        r=r,
        mu=mu,
        rho=rho_of_mu(mu),
        b0=b0,
        eta0=eta0,
        kappa1=kappa1,
        kappa2=kappa2,
        eps_star=math.exp(log_eps),
        n_star=n_star if math.isfinite(n_star) else -1,
        log_eta0=log_eta0,
        log_eps_star=log_eps,
        kappa_grid=config.kappa_grid,
    )
    if not math.isfinite(n_star) or n_star > config.order_cap:
        raise OrderTooLarge(
            f"certified order n*={n_star} exceeds the cap {config.order_cap}",
            n_star=n_star,
            cap=config.order_cap,
            constants=constants,
        )
    return constants
