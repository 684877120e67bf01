"""Mixed-type configuration domain and its unit-hypercube encoding.

A :class:`ConfigSpace` is an ordered list of :class:`ParameterSpec` plus a
list of :class:`Constraint`.  Configurations travel in two forms:

* a *typed config*, a plain ``dict`` mapping parameter name to an
  ``int``/``float``/``str``/``bool`` value, and
* an encoded point, a 1-D ``numpy`` array in ``[0, 1]^d`` whose coordinate
  order is the parameter order of the space.

Categorical values are encoded at the midpoint of their stratum and
booleans at 0.25/0.75, so every value has a canonical interior
representative and ``decode(encode(cfg)) == cfg``.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicatePlaceholder,
    ParseError,
    SchemaInvalid,
    UnknownParameter,
    UnresolvedPlaceholder,
    ValueOutOfBounds,
)

KINDS = ("numeric-int", "numeric-float", "categorical", "boolean")
NUMERIC_KINDS = ("numeric-int", "numeric-float")
CONSTRAINT_KINDS = ("implies", "less-equal", "forbidden-combo")
COMPARATORS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}

# decoded floats are quantized to this many significant digits so that
# decode(encode(decode(x))) == decode(x) holds exactly
FLOAT_DIGITS = 12

PLACEHOLDER_RE = re.compile(r"\{\{\s*([A-Za-z0-9_.\-]+)\s*\}\}")


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    kind: str
    lo: float | None = None
    hi: float | None = None
    choices: tuple[Any, ...] = ()
    scale: str = "linear"
    default: Any = None
    target_path: str = ""

    def __post_init__(self):
        if self.kind == "boolean" and not self.choices:
            object.__setattr__(self, "choices", (False, True))
        if not self.target_path:
            object.__setattr__(self, "target_path", self.name)
        self.validate()

    @property
    def is_numeric(self) -> bool:
        return self.kind in NUMERIC_KINDS

    def validate(self):
        if self.kind not in KINDS:
            raise SchemaInvalid(self.name, f"unknown kind {self.kind!r}")
        if self.is_numeric:
            if self.lo is None or self.hi is None:
                raise SchemaInvalid(self.name, "numeric parameter needs lo and hi")
            if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
                raise SchemaInvalid(self.name, "bounds must be finite")
            if not self.lo < self.hi:
                raise SchemaInvalid(self.name, f"lo ({self.lo}) must be < hi ({self.hi})")
            if self.scale not in ("linear", "log"):
                raise SchemaInvalid(self.name, f"unknown scale {self.scale!r}")
            if self.scale == "log" and self.lo <= 0:
                raise SchemaInvalid(self.name, "log scale requires lo > 0")
            if self.kind == "numeric-int" and (self.lo != int(self.lo) or self.hi != int(self.hi)):
                raise SchemaInvalid(self.name, "integer bounds must be integral")
        elif self.kind == "boolean":
            if tuple(self.choices) != (False, True):
                raise SchemaInvalid(self.name, "boolean choices must be (false, true)")
        else:
            if len(self.choices) < 2:
                raise SchemaInvalid(self.name, "categorical needs at least 2 choices")
            if len(set(self.choices)) != len(self.choices):
                raise SchemaInvalid(self.name, "categorical choices must be distinct")
        if self.default is not None:
            try:
                self.check_value(self.default)
            except (ValueOutOfBounds, TypeError) as exc:
                raise SchemaInvalid(self.name, f"invalid default: {exc}") from None

    def check_value(self, v):
        """Raise ValueOutOfBounds unless ``v`` is a legal value of this parameter."""
        if self.kind == "boolean":
            if not isinstance(v, (bool, np.bool_)):
                raise ValueOutOfBounds(f"{self.name}: expected bool, got {v!r}")
        elif self.kind == "categorical":
            if v not in self.choices:
                raise ValueOutOfBounds(f"{self.name}: {v!r} not in {list(self.choices)}")
        else:
            if isinstance(v, (bool, np.bool_)) or not isinstance(v, (int, float, np.integer, np.floating)):
                raise ValueOutOfBounds(f"{self.name}: expected number, got {v!r}")
            if self.kind == "numeric-int" and float(v) != int(v):
                raise ValueOutOfBounds(f"{self.name}: expected integer, got {v!r}")
            if not (self.lo <= v <= self.hi):
                raise ValueOutOfBounds(f"{self.name}: {v!r} outside [{self.lo}, {self.hi}]")

    def encode_value(self, v) -> float:
        self.check_value(v)
        if self.is_numeric:
            if self.scale == "log":
                return (math.log(v) - math.log(self.lo)) / (math.log(self.hi) - math.log(self.lo))
            return (v - self.lo) / (self.hi - self.lo)
        if self.kind == "boolean":
            return 0.75 if v else 0.25
        m = len(self.choices)
        return (self.choices.index(v) + 0.5) / m

    def decode_value(self, u: float):
        if self.kind == "boolean":
            return bool(u >= 0.5)
        if self.kind == "categorical":
            m = len(self.choices)
            return self.choices[min(int(math.floor(u * m)), m - 1)]
        if self.scale == "log":
            raw = math.exp(math.log(self.lo) + u * (math.log(self.hi) - math.log(self.lo)))
        else:
            raw = self.lo + u * (self.hi - self.lo)
        if self.kind == "numeric-int":
            # round() on floats is half-to-even
            return int(min(max(round(raw), int(self.lo)), int(self.hi)))
        raw = float(f"{raw:.{FLOAT_DIGITS}g}")
        return min(max(raw, float(self.lo)), float(self.hi))

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.is_numeric:
            out.update(lo=self.lo, hi=self.hi, scale=self.scale)
        elif self.kind == "categorical":
            out["choices"] = list(self.choices)
        out["default"] = self.default
        out["target_path"] = self.target_path
        return out


@dataclass(frozen=True)
class Constraint:
    """A feasibility rule over named parameters.

    Operand layouts by kind:

    ``implies``
        ``{"if": [name, op, value], "then": [name, op, value]}``
    ``less-equal``
        ``{"lhs": name, "rhs": name}``; violated when ``lhs > rhs``
    ``forbidden-combo``
        ``{"values": {name: value, ...}}``; violated when all match
    """

    kind: str
    operands: Mapping[str, Any]

    def names(self) -> list[str]:
        if self.kind == "implies":
            return [self.operands["if"][0], self.operands["then"][0]]
        if self.kind == "less-equal":
            return [self.operands["lhs"], self.operands["rhs"]]
        return list(self.operands["values"])

    def holds(self, cfg: Mapping[str, Any]) -> bool:
        if self.kind == "implies":
            a, op_a, va = self.operands["if"]
            b, op_b, vb = self.operands["then"]
            return not COMPARATORS[op_a](cfg[a], va) or COMPARATORS[op_b](cfg[b], vb)
        if self.kind == "less-equal":
            return cfg[self.operands["lhs"]] <= cfg[self.operands["rhs"]]
        return not all(cfg[k] == v for k, v in self.operands["values"].items())

    def describe(self) -> str:
        return f"{self.kind} {json.dumps(dict(self.operands), sort_keys=True)}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, **{k: v for k, v in self.operands.items()}}


@dataclass(frozen=True)
class ConfigSpace:
    params: tuple[ParameterSpec, ...]
    constraints: tuple[Constraint, ...] = ()
    version: str = "1"
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        for i, p in enumerate(self.params):
            if p.name in index:
                raise SchemaInvalid(p.name, "duplicate parameter name")
            index[p.name] = i
        object.__setattr__(self, "_index", index)
        for c in self.constraints:
            _validate_constraint(c, self)

    @property
    def d(self) -> int:
        return len(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    def __getitem__(self, name: str) -> ParameterSpec:
        try:
            return self.params[self._index[name]]
        except KeyError:
            raise UnknownParameter(name) from None

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownParameter(name) from None

    def defaults(self) -> dict:
        return {p.name: p.default for p in self.params}

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "params": [p.to_dict() for p in self.params],
            "constraints": [c.to_dict() for c in self.constraints],
        }


def _validate_constraint(c: Constraint, space: ConfigSpace):
    label = f"constraint {c.kind}"
    if c.kind not in CONSTRAINT_KINDS:
        raise SchemaInvalid(label, "unknown constraint kind")
    try:
        names = c.names()
    except (KeyError, TypeError, ValueError, IndexError):
        raise SchemaInvalid(label, "malformed operands") from None
    for n in names:
        if n not in space._index:
            raise SchemaInvalid(label, f"references unknown parameter {n!r}")
    if c.kind == "implies":
        for side in ("if", "then"):
            name, op, value = c.operands[side]
            spec = space[name]
            if op not in COMPARATORS:
                raise SchemaInvalid(label, f"unknown comparator {op!r}")
            if not spec.is_numeric and op not in ("==", "!="):
                raise SchemaInvalid(label, f"{name}: ordering comparator on non-numeric parameter")
            try:
                spec.check_value(value) if not spec.is_numeric else _check_number(value)
            except (ValueOutOfBounds, TypeError) as exc:
                raise SchemaInvalid(label, str(exc)) from None
    elif c.kind == "less-equal":
        for n in names:
            if not space[n].is_numeric:
                raise SchemaInvalid(label, f"{n} is not numeric")
    else:
        for n, v in c.operands["values"].items():
            try:
                space[n].check_value(v)
            except ValueOutOfBounds as exc:
                raise SchemaInvalid(label, str(exc)) from None


def _check_number(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueOutOfBounds(f"expected number, got {v!r}")


def encode(cfg: Mapping[str, Any], space: ConfigSpace) -> np.ndarray:
    """Map a typed config to its canonical point in ``[0, 1]^d``."""
    for name in cfg:
        space.index_of(name)
    x = np.empty(space.d)
    for i, p in enumerate(space.params):
        if p.name not in cfg:
            raise UnknownParameter(f"missing value for {p.name}")
        x[i] = p.encode_value(cfg[p.name])
    return x


def decode(x, space: ConfigSpace) -> dict:
    x = np.asarray(x, dtype=float)
    if x.shape != (space.d,):
        raise DimensionMismatch(f"expected point of length {space.d}, got shape {x.shape}")
    if np.any(x < 0.0) or np.any(x > 1.0) or not np.all(np.isfinite(x)):
        raise ValueOutOfBounds("point coordinates must lie in [0, 1]; clip first")
    return {p.name: p.decode_value(float(u)) for p, u in zip(space.params, x)}


def canonical(x, space: ConfigSpace) -> np.ndarray:
    """Canonical representative of the decode-equivalence class of ``x``."""
    return encode(decode(x, space), space)


def check_feasible(cfg: Mapping[str, Any], space: ConfigSpace) -> list[Constraint]:
    """Return every violated constraint; an empty list means feasible."""
    return [c for c in space.constraints if not c.holds(cfg)]


# -- materialization ---------------------------------------------------------


def render_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def materialize(cfg: Mapping[str, Any], templates: Mapping[str, str], space: ConfigSpace) -> dict[str, str]:
    """Render every template with the config's values.

    Each parameter's ``target_path`` must occur exactly once over all
    templates, and every placeholder must name a parameter.
    """
    by_path = {p.target_path: p.name for p in space.params}
    seen: dict[str, str] = {}
    for fname in sorted(templates):
        for m in PLACEHOLDER_RE.finditer(templates[fname]):
            path = m.group(1)
            if path not in by_path:
                raise UnresolvedPlaceholder(f"{fname}: placeholder {{{{{path}}}}} names no parameter")
            if path in seen:
                raise DuplicatePlaceholder(f"{path} appears in {seen[path]} and {fname}")
            seen[path] = fname
    missing = [p for p in by_path if p not in seen]
    if missing:
        raise UnresolvedPlaceholder(f"no placeholder for {missing[0]}" + (f" (+{len(missing) - 1} more)" if len(missing) > 1 else ""))

    def sub(m):
        return render_value(cfg[by_path[m.group(1)]])

    return {fname: PLACEHOLDER_RE.sub(sub, templates[fname]) for fname in sorted(templates)}


def bundle_hash(bundle: Mapping[str, str]) -> str:
    h = hashlib.sha256()
    for name in sorted(bundle):
        h.update(name.encode())
        h.update(b"\0")
        h.update(bundle[name].encode())
        h.update(b"\0")
    return h.hexdigest()


def load_templates(directory) -> dict[str, str]:
    """Read ``*.tmpl`` files; keys are file names with the suffix removed."""
    directory = Path(directory)
    out = {}
    for path in sorted(directory.glob("*.tmpl")):
        out[path.name[: -len(".tmpl")]] = path.read_text()
    if not out:
        raise ParseError(f"no *.tmpl files in {directory}")
    return out


# -- schema loading ----------------------------------------------------------


def _read_structured(path: Path):
    text = path.read_text()
    try:
        if path.suffix in (".yaml", ".yml"):
            import yaml

            return yaml.safe_load(text)
        return json.loads(text)
    except Exception as exc:  # json and yaml raise unrelated types
        raise ParseError(f"{path}: {exc}") from None


def space_from_dict(doc) -> ConfigSpace:
    if not isinstance(doc, dict) or "params" not in doc:
        raise ParseError("schema must be a mapping with a 'params' list")
    params = []
    for i, raw in enumerate(doc["params"]):
        if not isinstance(raw, dict) or "name" not in raw or "kind" not in raw:
            raise ParseError(f"params[{i}] needs at least 'name' and 'kind'")
        unknown = set(raw) - {"name", "kind", "lo", "hi", "choices", "scale", "default", "target_path"}
        if unknown:
            raise SchemaInvalid(raw["name"], f"unknown fields {sorted(unknown)}")
        kw = dict(raw)
        if "choices" in kw:
            kw["choices"] = tuple(kw["choices"])
        try:
            params.append(ParameterSpec(**kw))
        except TypeError as exc:
            raise SchemaInvalid(raw["name"], str(exc)) from None
    constraints = []
    for raw in doc.get("constraints", []) or []:
        raw = dict(raw)
        kind = raw.pop("kind", None)
        constraints.append(Constraint(kind, raw))
    return ConfigSpace(tuple(params), tuple(constraints), str(doc.get("version", "1")))


def load_space(schema_file) -> ConfigSpace:
    path = Path(schema_file)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    return space_from_dict(_read_structured(path))


def default_schema_path() -> Path:
    return Path(str(resources.files("hlftune") / "data" / "fabric_schema.json"))


def default_templates_dir() -> Path:
    return Path(str(resources.files("hlftune") / "data" / "templates"))


def default_space() -> ConfigSpace:
    return load_space(default_schema_path())


def points_in_unit_cube(X: Sequence) -> bool:
    X = np.asarray(X, dtype=float)
    return bool(np.all((X >= 0.0) & (X <= 1.0)))
