"""Independent references for the certificate.

* ``scalar_critical_delay``: closed-form delay at which a root of
  ``s = a + b e^{-sh}`` crosses the imaginary axis.
* ``simulate_dde``: fixed-step RK4 method of steps, with cubic Hermite
  interpolation of the stored history for the delayed argument.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._config import DEFAULT_CONFIG
from .exceptions import DomainError, NotScalar

__all__ = ["SimTrace", "scalar_critical_delay", "simulate_dde", "growth_rate"]


def scalar_critical_delay(a, b=None):
    """Smallest destabilizing delay of ``x' = a x + b x(t-h)``.

    Returns ``0.0`` when the system is unstable for every delay (``a + b >= 0``)
    and ``None`` when it is stable for every delay.  Accepts two reals or a
    1x1 :class:`TimeDelaySystem`.
    """
    if b is None:
        sys = a
        if getattr(sys, "m", None) != 1:
            raise NotScalar(f"critical-delay formula needs a scalar system, got m={getattr(sys, 'm', '?')}")
        a, b = float(sys.A[0, 0]), float(sys.Ad[0, 0])
    a, b = float(a), float(b)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise DomainError("coefficients must be finite")
    if a + b >= 0:
        return 0.0
    if abs(b) <= abs(a):
        return None
    omega = math.sqrt(b * b - a * a)
    return math.acos(-a / b) / omega


@dataclass(frozen=True, eq=False)
class SimTrace:
    times: np.ndarray
    states: np.ndarray  # (len(times), m)
    step: float
    growth_estimate: float
    diverged: bool = False

    @property
    def norms(self):
        return np.linalg.norm(self.states, axis=1)


def growth_rate(times, states):
    """Exponential rate of ``|x(t)|`` over the trailing half of the samples.

    Least-squares slope of ``log |x|`` through the local maxima (the envelope
    of an oscillating solution) when there are at least three, otherwise
    through every sample.
    """
    times = np.asarray(times, dtype=np.float64)
    norms = np.linalg.norm(np.asarray(states).reshape(times.size, -1), axis=1)
    half = times.size // 2
    t, r = times[half:], norms[half:]
    if t.size < 2:
        return float("nan")
    peaks = np.flatnonzero((r[1:-1] >= r[:-2]) & (r[1:-1] > r[2:])) + 1
    if peaks.size >= 3:
        t, r = t[peaks], r[peaks]
    logs = np.log(np.maximum(r, np.finfo(float).tiny))
    slope, _ = np.polyfit(t - t[0], logs, 1)
    return float(slope)


def _history(phi, m, h, n_h):
    """Samples and derivatives of the initial function on ``[-h, 0]``."""
    t = np.linspace(-h, 0.0, n_h + 1)
    if phi is None:
        phi = np.ones(m)
    if callable(phi):
        x = np.array([np.broadcast_to(np.asarray(phi(s), dtype=np.float64), (m,)) for s in t])
        eps = 1e-6 * h
        dx = np.array(
            [
                (np.asarray(phi(min(s + eps, 0.0)), dtype=np.float64) - np.asarray(phi(max(s - eps, -h)), dtype=np.float64))
                / (min(s + eps, 0.0) - max(s - eps, -h))
                for s in t
            ]
        ).reshape(n_h + 1, m)
    else:
        v = np.asarray(phi, dtype=np.float64).reshape(-1)
        if v.size == 1:
            v = np.full(m, float(v[0]))
        if v.size != m:
            raise DomainError(f"constant history must have length {m}, got {v.size}")
        x = np.tile(v, (n_h + 1, 1))
        dx = np.zeros_like(x)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(dx))):
        raise DomainError("initial history must be finite")
    return x, dx


def simulate_dde(sys, phi=None, horizon=None, step=None, config=None):
    """Integrate ``x' = A x + Ad x(t-h)`` from the history ``phi`` on ``[-h, 0]``.

    ``phi``: ``None`` (all ones), a constant vector, or a callable of ``t``.
    The step is shrunk so that it divides ``h``; the delayed state at RK4
    half-steps comes from cubic Hermite interpolation of stored states and
    derivatives.  A state norm above ``config.sim_divergence`` stops the run
    with ``diverged=True`` instead of raising.
    """
    config = config or DEFAULT_CONFIG
    A, Ad, h, m = sys.A, sys.Ad, sys.h, sys.m
    horizon = config.sim_horizon_factor * h if horizon is None else float(horizon)
    step = config.sim_step_fraction * h if step is None else float(step)
    if not step > 0 or step > h / 10 * (1 + 1e-12):
        raise DomainError(f"step must lie in (0, h/10] = (0, {h / 10:g}], got {step:g}")
    if not horizon >= 10 * h * (1 - 1e-12):
        raise DomainError(f"horizon must be at least 10 h = {10 * h:g}, got {horizon:g}")
    n_h = int(math.ceil(h / step - 1e-9))
    s = h / n_h
    n_steps = int(math.ceil(horizon / s - 1e-9))

    x_hist, dx_hist = _history(phi, m, h, n_h)
    X = np.empty((n_h + n_steps + 1, m))
    DX = np.empty_like(X)  # derivative from the left; equal to the right one except at t = 0
    X[: n_h + 1] = x_hist
    DX[: n_h + 1] = dx_hist
    At, Adt = A.T, Ad.T

    # One RK4 step of x' = A x + g is linear: x+ = Phi x + P0 g(t) + Pm g(t+s/2) + P1 g(t+s).
    def rk4(x, g0, gm, g1):
        k1 = A @ x + g0
        k2 = A @ (x + 0.5 * s * k1) + gm
        k3 = A @ (x + 0.5 * s * k2) + gm
        k4 = A @ (x + s * k3) + g1
        return x + (s / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    I, Z = np.eye(m), np.zeros((m, m))
    PhiT = rk4(I, Z, Z, Z).T
    P0T, PmT, P1T = rk4(Z, I, Z, Z).T, rk4(Z, Z, I, Z).T, rk4(Z, Z, Z, I).T

    limit = config.sim_divergence
    diverged = False
    last = n_steps
    i = 0
    while i < n_steps:
        # within one delay interval every delayed value is already stored
        cnt = min(n_h, n_steps - i)
        c = n_h + i
        xd0 = X[c - n_h : c - n_h + cnt]
        xd1 = X[c - n_h + 1 : c - n_h + cnt + 1]
        dd0 = DX[c - n_h : c - n_h + cnt].copy()
        if i == n_h:
            dd0[0] = X[n_h] @ At + X[0] @ Adt  # x' jumps at t = 0
        dd1 = DX[c - n_h + 1 : c - n_h + cnt + 1]
        xd_mid = 0.5 * (xd0 + xd1) + 0.125 * s * (dd0 - dd1)
        forcing = (xd0 @ Adt) @ P0T + (xd_mid @ Adt) @ PmT + (xd1 @ Adt) @ P1T
        x = X[c]
        for q in range(cnt):
            x = x @ PhiT + forcing[q]
            X[c + 1 + q] = x
        new = X[c + 1 : c + 1 + cnt]
        DX[c + 1 : c + 1 + cnt] = new @ At + xd1 @ Adt
        nrm = np.linalg.norm(new, axis=1)
        bad = np.flatnonzero(~(nrm <= limit))
        if bad.size:
            diverged = True
            last = i + int(bad[0]) + 1
            break
        i += cnt
    times = s * np.arange(last + 1)
    states = X[n_h : n_h + last + 1].copy()
    growth = growth_rate(times, states)
    if diverged and not math.isfinite(growth):
        growth = math.inf
    return SimTrace(times, states, s, growth, diverged)
