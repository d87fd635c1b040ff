"""JSON system files, parameter templates, sweep specifications and CSV output.

A system file is ``{"A": [[...]], "Ad": [[...]], "h": 0.5, "name": "..."}``
with row-major nested arrays.  A template is the same document where any
entry (or ``h``) may be a string expression in named parameters, e.g.
``"-10-K"``; default parameter values go under ``"parameters"``.  A sweep
specification binds one or two targets (``"h"`` or a parameter name) to a
grid::

    {"mode": "sweep", "regions": 5,
     "parameters": [{"target": "K", "values": {"min": 1, "max": 30, "count": 60}},
                    {"target": "h", "values": {"min": 0, "max": 2, "count": 60, "open_min": true}}]}
"""

import ast
import csv
import json
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InvalidInput
from .system import TimeDelaySystem

__all__ = [
    "SystemTemplate",
    "SweepParameter",
    "SweepSpec",
    "load_json",
    "system_from_dict",
    "load_system",
    "load_template",
    "load_sweep_spec",
    "format_float",
    "write_csv",
    "evaluate_expression",
]

SCHEMA_VERSION = 1

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def evaluate_expression(text, params):
    """Arithmetic on numbers and parameter names (``+ - * / **``, parentheses)."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in params:
                raise InvalidInput(f"unknown parameter {node.id!r} in expression {text!r}")
            return float(params[node.id])
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        raise InvalidInput(f"unsupported syntax in expression {text!r}")

    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError:
        raise InvalidInput(f"cannot parse expression {text!r}") from None
    try:
        value = ev(tree)
    except (ZeroDivisionError, OverflowError) as exc:
        raise InvalidInput(f"expression {text!r} failed: {exc}") from None
    if not math.isfinite(value):
        raise InvalidInput(f"expression {text!r} is not finite")
    return value


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InvalidInput(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def _require(doc, key, where):
    if not isinstance(doc, dict):
        raise InvalidInput(f"{where}: expected a JSON object")
    if key not in doc:
        raise InvalidInput(f"{where}: missing field {key!r}")
    return doc[key]


def _matrix(raw, name):
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return [[raw]]
    if not isinstance(raw, list) or not raw or not all(isinstance(row, list) for row in raw):
        raise InvalidInput(f"{name} must be a non-empty nested array (row-major)")
    return raw


def system_from_dict(doc, where="system"):
    A = _matrix(_require(doc, "A", where), "A")
    Ad = _matrix(_require(doc, "Ad", where), "Ad")
    h = _require(doc, "h", where)
    if isinstance(h, bool) or not isinstance(h, (int, float)):
        raise InvalidInput(f"{where}: h must be a number")
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise InvalidInput(f"{where}: name must be text")
    for mat, label in ((A, "A"), (Ad, "Ad")):
        for row in mat:
            for x in row:
                if isinstance(x, bool) or not isinstance(x, (int, float)):
                    raise InvalidInput(f"{where}: {label} entries must be numbers, got {x!r}")
    return TimeDelaySystem(A, Ad, float(h), name)


def load_system(path):
    return system_from_dict(load_json(path), str(path))


@dataclass(frozen=True)
class SystemTemplate:
    A: list
    Ad: list
    h: object
    name: str = ""
    defaults: dict = field(default_factory=dict)

    def names(self):
        found = set()
        for entry in [self.h] + [x for mat in (self.A, self.Ad) for row in mat for x in row]:
            if isinstance(entry, str):
                found |= _names(entry)
        return found

    def instantiate(self, **bindings):
        params = dict(self.defaults)
        params.update({k: v for k, v in bindings.items() if k != "h"})

        def value(x):
            return evaluate_expression(x, params) if isinstance(x, str) else float(x)

        A = [[value(x) for x in row] for row in self.A]
        Ad = [[value(x) for x in row] for row in self.Ad]
        h = bindings["h"] if "h" in bindings else self.h
        if h is None:
            raise InvalidInput("template has no delay h and none is bound")
        return TimeDelaySystem(A, Ad, value(h), self.name)


def template_from_dict(doc, where="template"):
    A = _matrix(_require(doc, "A", where), "A")
    Ad = _matrix(_require(doc, "Ad", where), "Ad")
    defaults = doc.get("parameters", {})
    if not isinstance(defaults, dict):
        raise InvalidInput(f"{where}: parameters must be an object of default values")
    for key, v in defaults.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise InvalidInput(f"{where}: default for parameter {key!r} must be a number")
    for mat in (A, Ad):
        for row in mat:
            for x in row:
                if isinstance(x, bool) or not isinstance(x, (int, float, str)):
                    raise InvalidInput(f"{where}: entries must be numbers or expressions, got {x!r}")
                if isinstance(x, str):
                    evaluate_expression(x, {n: 1.0 for n in _names(x)})  # syntax check
    return SystemTemplate(A, Ad, doc.get("h"), doc.get("name", ""), dict(defaults))


def _names(text):
    try:
        return {n.id for n in ast.walk(ast.parse(text, mode="eval")) if isinstance(n, ast.Name)}
    except SyntaxError:
        raise InvalidInput(f"cannot parse expression {text!r}") from None


def load_template(path):
    return template_from_dict(load_json(path), str(path))


@dataclass(frozen=True)
class SweepParameter:
    target: str
    values: tuple


@dataclass(frozen=True)
class SweepSpec:
    parameters: tuple
    mode: str = "theorem"
    regions: int = 5
    max_order: int | None = None
    verdict: bool = True

    @property
    def dims(self):
        return len(self.parameters)

    def grid(self):
        """Grid points in row-major order (first parameter slowest)."""
        if self.dims == 1:
            p = self.parameters[0]
            return [{p.target: v} for v in p.values]
        p, q = self.parameters
        return [{p.target: a, q.target: b} for a in p.values for b in q.values]


def _grid_values(raw, target):
    if isinstance(raw, list):
        if not raw:
            raise InvalidInput(f"parameter {target!r}: empty value list")
        vals = []
        for v in raw:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise InvalidInput(f"parameter {target!r}: values must be finite numbers")
            vals.append(float(v))
        return tuple(vals)
    if isinstance(raw, dict):
        try:
            lo, hi, count = float(raw["min"]), float(raw["max"]), raw["count"]
        except KeyError as exc:
            raise InvalidInput(f"parameter {target!r}: grid needs min, max and count (missing {exc})") from None
        except (TypeError, ValueError):
            raise InvalidInput(f"parameter {target!r}: min and max must be numbers") from None
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            raise InvalidInput(f"parameter {target!r}: count must be a positive integer")
        if not lo < hi:
            raise InvalidInput(f"parameter {target!r}: need min < max, got [{lo}, {hi}]")
        if raw.get("open_min", False):
            vals = np.linspace(lo, hi, count + 1)[1:]
        else:
            vals = np.linspace(lo, hi, count)
        return tuple(float(v) for v in vals)
    raise InvalidInput(f"parameter {target!r}: values must be a list or a {{min, max, count}} object")


def sweep_spec_from_dict(doc, where="sweep spec"):
    params = _require(doc, "parameters", where)
    if not isinstance(params, list) or not params:
        raise InvalidInput(f"{where}: parameters must be a non-empty list")
    if len(params) > 2:
        raise InvalidInput(f"{where}: at most 2 swept parameters, got {len(params)}")
    out = []
    for p in params:
        target = _require(p, "target", where)
        if not isinstance(target, str) or not target:
            raise InvalidInput(f"{where}: target must be 'h' or a parameter name")
        raw = p["values"] if "values" in p else {k: p[k] for k in ("min", "max", "count", "open_min") if k in p}
        out.append(SweepParameter(target, _grid_values(raw, target)))
    if len({p.target for p in out}) != len(out):
        raise InvalidInput(f"{where}: a parameter is swept twice")
    mode = doc.get("mode", "theorem")
    if mode not in ("theorem", "sweep"):
        raise InvalidInput(f"{where}: mode must be 'theorem' or 'sweep', got {mode!r}")
    regions = doc.get("regions", 5)
    if isinstance(regions, bool) or not isinstance(regions, int) or regions < 1:
        raise InvalidInput(f"{where}: regions must be a positive integer")
    max_order = doc.get("max_order")
    if max_order is not None and (isinstance(max_order, bool) or not isinstance(max_order, int) or max_order < 1):
        raise InvalidInput(f"{where}: max_order must be a positive integer")
    verdict = doc.get("verdict", True)
    if not isinstance(verdict, bool):
        raise InvalidInput(f"{where}: verdict must be true or false")
    if not verdict and len(out) != 2:
        raise InvalidInput(f"{where}: verdict=false (regions only) needs a 2-D sweep")
    return SweepSpec(tuple(out), mode, regions, max_order, verdict)


def load_sweep_spec(path):
    return sweep_spec_from_dict(load_json(path), str(path))


def format_float(x):
    """17 significant digits; empty for missing values."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def write_csv(path, header, rows):
    """Write ``rows`` (sequences aligned with ``header``) as UTF-8 CSV."""
    text_rows = [[v if isinstance(v, str) else format_float(v) for v in row] for row in rows]
    target = Path(path)
    try:
        with target.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(text_rows)
    except OSError as exc:
        raise InvalidInput(f"cannot write {path}: {exc.strerror or exc}") from None
