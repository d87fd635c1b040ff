"""scikit-learn style front end.

Samples are whole systems: ``X`` is a sequence of :class:`TimeDelaySystem`
objects, ``(A, Ad, h)`` triples or system dicts.  ``predict`` returns the
verdict labels and ``decision_function`` the smallest eigenvalue of the
tested certificate matrix (positive means certified stable).
"""

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._config import DEFAULT_CONFIG
from .certificate import VerdictKind, hierarchical_sweep, theorem_test
from .exceptions import InvalidInput, LyapunovConditionViolated, OrderTooLarge
from .io import system_from_dict
from .system import TimeDelaySystem

__all__ = ["LegendreStabilityCertifier", "check_systems"]

LABELS = tuple(str(k) for k in VerdictKind)


def check_systems(X):
    """Coerce ``X`` into a list of :class:`TimeDelaySystem`."""
    if isinstance(X, (TimeDelaySystem, dict)):
        X = [X]
    try:
        items = list(X)
    except TypeError:
        raise InvalidInput(f"expected a sequence of systems, got {type(X).__name__}") from None
    if not items:
        raise InvalidInput("no systems given")
    out = []
    for i, x in enumerate(items):
        if isinstance(x, TimeDelaySystem):
            out.append(x)
        elif isinstance(x, dict):
            out.append(system_from_dict(x, f"X[{i}]"))
        elif isinstance(x, (tuple, list)) and len(x) == 3:
            out.append(TimeDelaySystem(*x))
        else:
            raise InvalidInput(f"X[{i}]: expected a TimeDelaySystem, a dict or an (A, Ad, h) triple")
    return out


class LegendreStabilityCertifier(ClassifierMixin, BaseEstimator):
    """Stability certificate as a classifier.

    Parameters
    ----------
    mode : "theorem" or "sweep"
        Test only the certified order, or every order up to it.
    max_order : int or None
        Cap for the sweep mode (a capped run without failure is Inconclusive).
    kappa_grid, order_cap, table_method, validate_tables
        Passed to the configuration.
    positivity_tol : float
        Relative band ``theta`` of the positivity test.
    """

    def __init__(
        self,
        mode="theorem",
        max_order=None,
        kappa_grid=2001,
        positivity_tol=1e-10,
        order_cap=5000,
        table_method="stable",
        validate_tables=True,
    ):
        self.mode = mode
        self.max_order = max_order
        self.kappa_grid = kappa_grid
        self.positivity_tol = positivity_tol
        self.order_cap = order_cap
        self.table_method = table_method
        self.validate_tables = validate_tables

    def _config(self):
        if self.mode not in ("theorem", "sweep"):
            raise InvalidInput(f"mode must be 'theorem' or 'sweep', got {self.mode!r}")
        if self.max_order is not None and (not isinstance(self.max_order, (int, np.integer)) or self.max_order < 1):
            raise InvalidInput("max_order must be a positive integer or None")
        if self.kappa_grid < 2 or self.order_cap < 1 or not self.positivity_tol >= 0:
            raise InvalidInput("kappa_grid >= 2, order_cap >= 1 and positivity_tol >= 0 required")
        if self.table_method not in ("stable", "forward", "quadrature"):
            raise InvalidInput(f"unknown table_method {self.table_method!r}")
        return DEFAULT_CONFIG.replace(
            kappa_grid=int(self.kappa_grid),
            positivity_theta=float(self.positivity_tol),
            order_cap=int(self.order_cap),
            table_method=self.table_method,
            validate_tables=bool(self.validate_tables),
        )

    def fit(self, X=None, y=None):
        """Validate the parameters.  Nothing is learned; ``X`` and ``y`` are ignored."""
        self.config_ = self._config()
        self.classes_ = np.array(LABELS, dtype=object)
        return self

    def _verdict(self, sys):
        try:
            if self.mode == "sweep":
                v = hierarchical_sweep(sys, n_max=self.max_order, config=self.config_)
            else:
                v = theorem_test(sys, config=self.config_)
        except LyapunovConditionViolated:
            return str(VerdictKind.LYAPUNOV_CONDITION_VIOLATED), math.nan, None
        except OrderTooLarge:
            return str(VerdictKind.INCONCLUSIVE), math.nan, None
        return str(v.kind), v.margin, v

    def certify(self, X):
        """Full :class:`StabilityVerdict` objects (``None`` where no verdict was reached)."""
        check_is_fitted(self, "config_")
        return [self._verdict(s)[2] for s in check_systems(X)]

    def predict(self, X):
        check_is_fitted(self, "config_")
        return np.array([self._verdict(s)[0] for s in check_systems(X)], dtype=object)

    def decision_function(self, X):
        check_is_fitted(self, "config_")
        return np.array([self._verdict(s)[1] for s in check_systems(X)], dtype=np.float64)
