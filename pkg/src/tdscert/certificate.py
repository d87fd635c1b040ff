"""Assembly of the certificate matrix ``P_n`` and the stability decisions.

``P_n`` has size ``(n+1) m``::

    [ U(0)       Q_0^T Ad   ...  Q_{n-1}^T Ad ]
    [  *     Ad^T (T_jk + Tflat_jk^T) Ad + delta_jk h/(2j+1) I ]

where ``Q_k``, ``T_jk`` and ``Tflat_jk`` are the Legendre coefficients of the
delay Lyapunov matrix read off the moment tables.  The system is
exponentially stable iff ``P_{n_star}`` is positive definite, and a
non-positive ``P_n`` at any order proves instability (the property is
inherited by every higher order since ``P_n`` is a leading principal
submatrix of ``P_{n+1}``).
"""

import enum
import math
import logging
from dataclasses import dataclass, field

import numpy as np

from ._config import DEFAULT_CONFIG
from .exceptions import DimensionMismatch, OrderTooLarge
from .legendre import build_legendre_table
from .numerics import symmetric_spectrum
from .system import build_MN, compute_n_star

__all__ = [
    "VerdictKind",
    "UCoefficients",
    "CertificateMatrix",
    "PositivityResult",
    "StabilityVerdict",
    "u_coefficients",
    "assemble_P",
    "test_positivity",
    "leading_min_eigenvalues",
    "certificate_matrix",
    "theorem_test",
    "hierarchical_sweep",
    "unstable_regions",
    "find_flip_interval",
]

log = logging.getLogger(__name__)


class VerdictKind(str, enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    INCONCLUSIVE = "Inconclusive"
    LYAPUNOV_CONDITION_VIOLATED = "LyapunovConditionViolated"

    def __str__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class UCoefficients:
    Q: np.ndarray  # (n, m, m)
    T: np.ndarray  # (n, n, m, m)
    Tflat: np.ndarray  # (n, n, m, m)

    @property
    def n(self):
        return self.Q.shape[0]


@dataclass(frozen=True, eq=False)
class CertificateMatrix:
    n: int
    m: int
    P: np.ndarray
    min_eig: float
    asymmetry: float
    assembled_from: dict = field(default_factory=dict)
    max_eig: float = math.nan

    @property
    def norm(self):
        """Spectral norm, read off the extreme eigenvalues of the symmetric ``P``."""
        if math.isnan(self.max_eig):
            return float(np.linalg.norm(self.P, 2))
        return max(abs(self.min_eig), abs(self.max_eig))

    def leading(self, order):
        """``P_order`` as a leading principal submatrix."""
        size = (order + 1) * self.m
        sub = self.P[:size, :size]
        spec = symmetric_spectrum(sub)
        return CertificateMatrix(order, self.m, sub, spec.min, self.asymmetry, self.assembled_from, spec.max)


class PositivityResult(tuple):
    """``(is_positive, inconclusive, margin, threshold)``; truthy iff certified positive."""

    __slots__ = ()

    def __new__(cls, is_positive, inconclusive, margin, threshold):
        return super().__new__(cls, (bool(is_positive), bool(inconclusive), float(margin), float(threshold)))

    is_positive = property(lambda self: self[0])
    inconclusive = property(lambda self: self[1])
    margin = property(lambda self: self[2])
    threshold = property(lambda self: self[3])

    def __bool__(self):
        return self.is_positive


@dataclass(frozen=True, eq=False)
class StabilityVerdict:
    kind: VerdictKind
    n_star: int | None
    first_failing_order: int | None
    margin: float | None
    constants: object = None
    mode: str = "theorem"
    order_tested: int | None = None
    order_margins: tuple = ()

    @property
    def is_stable(self):
        return self.kind is VerdictKind.STABLE


def u_coefficients(data, table, n):
    """``Q_k``, ``T_jk`` and ``Tflat_jk`` for ``j, k < n``.

    ``table`` may hold full moment matrices or, cheaper, moments already
    multiplied on the right by ``data.u``.
    """
    m = data.m
    m2 = m * m
    if table.n < n:
        raise DimensionMismatch(f"table has order {table.n}, need {n}")
    if table.Gamma.shape[1] != 2 * m2:
        raise DimensionMismatch("moment table and Lyapunov data belong to different dimensions")
    if table.right is None:
        top_g = table.Gamma[:n, :m2, :] @ data.u  # (n, m2)
        top_t = table.GammaBar[:n, :n, :m2, :] @ data.u  # (n, n, m2)
    else:
        if table.right.shape[1] != 1 or not np.array_equal(table.right[:, 0], data.u):
            raise DimensionMismatch("moment table was reduced with a different right factor than u")
        top_g = table.Gamma[:n, :m2, 0]
        top_t = table.GammaBar[:n, :n, :m2, 0]
    Q = top_g.reshape(n, m, m).transpose(0, 2, 1)
    T = top_t.reshape(n, n, m, m).transpose(0, 1, 3, 2)
    sign = (-1.0) ** np.add.outer(np.arange(n), np.arange(n))
    Tflat = sign[:, :, None, None] * T
    return UCoefficients(Q, T, Tflat)


def assemble_P(sys, data, coeffs, n):
    """Certificate matrix ``P_n`` (symmetrized) with its smallest eigenvalue."""
    m, h, Ad = sys.m, sys.h, sys.Ad
    if coeffs.n < n:
        raise DimensionMismatch(f"coefficients have order {coeffs.n}, need {n}")
    size = (n + 1) * m
    P = np.zeros((size, size))
    P[:m, :m] = data.U(0.0)
    if n > 0:
        top = np.einsum("kji,jl->kil", coeffs.Q[:n], Ad)  # Q_k^T Ad
        P[:m, m:] = top.transpose(1, 0, 2).reshape(m, n * m)
        P[m:, :m] = P[:m, m:].T
        inner = coeffs.T[:n, :n] + coeffs.Tflat[:n, :n].transpose(0, 1, 3, 2)
        blocks = np.einsum("ai,jkab,bl->jkil", Ad, inner, Ad)
        blocks += np.einsum("j,jk,il->jkil", h / (2.0 * np.arange(n) + 1.0), np.eye(n), np.eye(m))
        P[m:, m:] = blocks.transpose(0, 2, 1, 3).reshape(n * m, n * m)
    scale = max(float(np.linalg.norm(P)), 1e-300)
    asymmetry = float(np.linalg.norm(P - P.T)) / scale
    P = 0.5 * (P + P.T)
    P.setflags(write=False)
    provenance = {"system": sys.fingerprint(), "n": n}
    spec = symmetric_spectrum(P)
    return CertificateMatrix(n, m, P, spec.min, asymmetry, provenance, spec.max)


def test_positivity(cert, theta=None):
    """Positive iff ``min_eig > theta (1 + |P|)``; inconclusive inside ``+-`` that band."""
    theta = DEFAULT_CONFIG.positivity_theta if theta is None else theta
    threshold = theta * (1.0 + cert.norm)
    margin = cert.min_eig
    return PositivityResult(margin > threshold, abs(margin) <= threshold, margin, threshold)


# keep pytest from collecting the function above when imported into test modules
test_positivity.__test__ = False


def leading_min_eigenvalues(cert, orders=None):
    """Smallest eigenvalue of each leading ``P_k``, ``k`` in ``orders`` (default ``1..n``)."""
    orders = range(1, cert.n + 1) if orders is None else orders
    return [cert.leading(k).min_eig for k in orders]


def _certificate(sys, data, order, config):
    table = build_legendre_table(data.M, sys.h, max(order, 1), config, right=data.u)
    coeffs = u_coefficients(data, table, order)
    cert = assemble_P(sys, data, coeffs, order)
    cert.assembled_from.update(
        {
            "table_method": table.method,
            "table_deviation": table.deviation,
            "theta": config.positivity_theta,
            "kappa_grid": config.kappa_grid,
        }
    )
    return cert


def certificate_matrix(sys, order, config=None, data=None):
    """``P_order`` for ``sys``; lower orders are its leading blocks (see :meth:`CertificateMatrix.leading`)."""
    config = config or DEFAULT_CONFIG
    data = data if data is not None else build_MN(sys, config)
    if int(order) < 0:
        raise ValueError(f"order must be non-negative, got {order}")
    return _certificate(sys, data, int(order), config)


def _first_failure(cert, theta, start=1):
    """Lowest order ``>= start`` whose leading block is certified non-positive."""
    for k in range(start, cert.n + 1):
        res = test_positivity(cert.leading(k), theta)
        if not res.is_positive and not res.inconclusive:
            return k, res
    return None, None


def theorem_test(sys, config=None, data=None, constants=None):
    """Three steps: compute ``n_star``, assemble ``P_{n_star}``, test its positivity.

    Raises :class:`LyapunovConditionViolated` or :class:`OrderTooLarge`.
    """
    config = config or DEFAULT_CONFIG
    data = data if data is not None else build_MN(sys, config)
    constants = constants if constants is not None else compute_n_star(sys, data, config)
    n_star = constants.n_star
    cert = _certificate(sys, data, n_star, config)
    res = test_positivity(cert, config.positivity_theta)
    first = None
    if res.is_positive:
        kind = VerdictKind.STABLE
    elif res.inconclusive:
        kind = VerdictKind.INCONCLUSIVE
    else:
        kind = VerdictKind.UNSTABLE
        first, _ = _first_failure(cert, config.positivity_theta)
    log.debug("theorem_test %r: n*=%d min_eig=%.3e -> %s", sys, n_star, res.margin, kind)
    return StabilityVerdict(kind, n_star, first, res.margin, constants, "theorem", n_star)


def hierarchical_sweep(sys, n_max=None, config=None, data=None):
    """Test ``P_1, P_2, ...`` and stop at the first certified non-positive order.

    Runs up to ``n_star`` (or ``n_max`` when given and smaller).  All orders
    positive up to ``n_star`` means stable; stopping earlier at ``n_max``
    without a failure is reported as inconclusive.  The moment tables are
    grown in chunks (``config.sweep_chunk``, doubling) and each order is read
    as a leading principal submatrix.
    """
    config = config or DEFAULT_CONFIG
    data = data if data is not None else build_MN(sys, config)
    try:
        constants = compute_n_star(sys, data, config)
        n_star = constants.n_star
    except OrderTooLarge as exc:
        if n_max is None:
            raise
        constants, n_star = exc.constants, None
    target = n_star if n_max is None else (min(n_max, n_star) if n_star is not None else n_max)
    target = max(int(target), 1)
    theta = config.positivity_theta
    margins = []
    order = 0
    chunk = max(1, config.sweep_chunk)
    while order < target:
        order_hi = min(target, max(chunk, 2 * order))
        if 2 * order_hi >= target:
            order_hi = target
        cert = _certificate(sys, data, order_hi, config)
        for k in range(order + 1, order_hi + 1):
            res = test_positivity(cert.leading(k), theta)
            margins.append(res.margin)
            if not res.is_positive and not res.inconclusive:
                return StabilityVerdict(
                    VerdictKind.UNSTABLE, n_star, k, res.margin, constants, "sweep", k, tuple(margins)
                )
        order = order_hi
    final = test_positivity(cert.leading(target), theta)
    if final.is_positive and n_star is not None and target >= n_star:
        kind = VerdictKind.STABLE
    else:
        kind = VerdictKind.INCONCLUSIVE
    return StabilityVerdict(kind, n_star, None, final.margin, constants, "sweep", target, tuple(margins))


def unstable_regions(sys, k_max=5, config=None, data=None):
    """Per-order membership ``[P_1 not positive, ..., P_k_max not positive]``.

    Cheap low-order part of the hierarchy (no ``n_star`` needed); by
    interlacing the list is monotone, which callers may check.
    """
    config = config or DEFAULT_CONFIG
    data = data if data is not None else build_MN(sys, config)
    cert = _certificate(sys, data, k_max, config)
    theta = config.positivity_theta
    return [not test_positivity(cert.leading(k), theta).is_positive for k in range(1, k_max + 1)]


def find_flip_interval(sys, lo, hi, width=1e-3, config=None):
    """Bisect the delay for the Stable -> not-Stable transition of :func:`theorem_test`.

    ``sys`` must be stable at delay ``lo`` and not stable at ``hi``.
    Returns ``(h_stable, h_unstable)`` with ``h_unstable - h_stable <= width``.
    """
    config = config or DEFAULT_CONFIG

    def stable(h):
        return theorem_test(sys.with_delay(h), config).is_stable

    if not stable(lo) or stable(hi):
        raise ValueError(f"no Stable -> not-Stable transition bracketed by [{lo}, {hi}]")
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi
