"""Numerical tolerances and grid densities, gathered in one place.

Every routine that needs a tolerance takes an optional ``config`` argument;
``None`` means :data:`DEFAULT_CONFIG`.  Values can be overridden from a flat
``key = value`` file, from the ``TDS_CONFIG`` environment variable
(``key=value`` pairs separated by ``;`` or newlines, or the path of such a
file) and from explicit
overrides, in increasing order of precedence.
"""

import dataclasses
import os
import re
from dataclasses import dataclass
from pathlib import Path

from .exceptions import InvalidInput

__all__ = ["Config", "DEFAULT_CONFIG", "load_config", "parse_config_text"]


@dataclass(frozen=True)
class Config:
    # numerics kernel
    singular_rcond: float = 1e-13
    lambert_max_iter: int = 100
    lambert_tol: float = 1e-14
    bisect_tol: float = 1e-12

    # delay system / bound constants
    kappa_grid: int = 2001
    kappa_refresh: int = 100
    order_cap: int = 5000

    # Legendre moment tables
    table_method: str = "stable"
    singular_m_rcond: float = 1e-12
    quad_nodes: int = 64
    validate_tables: bool = True
    precision_loss_tol: float = 1e-6
    truncation_tol: float = 1e-30

    # certificate
    positivity_theta: float = 1e-10
    sweep_chunk: int = 8

    # simulation oracle
    sim_step_fraction: float = 1e-3
    sim_horizon_factor: float = 30.0
    sim_divergence: float = 1e12

    # cli
    workers: int = 1

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def as_dict(self):
        return dataclasses.asdict(self)


DEFAULT_CONFIG = Config()

_FIELDS = {f.name: f for f in dataclasses.fields(Config)}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key, raw):
    if key not in _FIELDS:
        raise InvalidInput(f"unknown configuration key {key!r}")
    kind = type(getattr(DEFAULT_CONFIG, key))
    if isinstance(raw, kind) and not (kind is int and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    try:
        if kind is bool:
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        if kind is int:
            value = float(text)
            if not value.is_integer():
                raise ValueError(text)
            return int(value)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise InvalidInput(f"bad value {raw!r} for configuration key {key!r}") from None


def parse_config_text(text):
    """Parse ``key = value`` lines (``#`` comments, ``;`` also separates entries)."""
    values = {}
    for chunk in re.split(r"[;\n]", text):
        line = chunk.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInput(f"config entry without '=': {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        values[key] = _coerce(key, raw)
    return values


def load_config(path=None, env=None, overrides=None):
    """Build a :class:`Config` with precedence overrides > env > file > defaults.

    ``env`` defaults to ``os.environ``; only its ``TDS_CONFIG`` entry is read.
    ``None`` values in ``overrides`` are ignored so that unset CLI flags fall
    through to the lower layers.
    """
    values = {}
    if path is not None:
        try:
            values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
        except OSError as exc:
            raise InvalidInput(f"cannot read config file {path}: {exc}") from None
    env = os.environ if env is None else env
    spec = env.get("TDS_CONFIG", "").strip()
    if spec:
        if "=" not in spec:
            # a bare value names a config file
            try:
                spec = Path(spec).read_text(encoding="utf-8")
            except OSError as exc:
                raise InvalidInput(f"cannot read TDS_CONFIG file {spec}: {exc}") from None
        values.update(parse_config_text(spec))
    for key, raw in (overrides or {}).items():
        if raw is not None:
            values[key] = _coerce(key, raw)
    return DEFAULT_CONFIG.replace(**values)
