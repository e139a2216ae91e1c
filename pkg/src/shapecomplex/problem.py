"""Segmentation problems: hierarchy, grid, costs, shape constraints and solver settings.

A problem is stored on disk as one JSON document that references FLD
rasters by relative path::

    {
      "grid": {"dims": [64, 64], "spacing": [1.0, 1.0]},
      "labels": [{"name": "vessel", "parent": "source"}, ...],
      "data_costs": {"interior": "D_interior.fld", ...},
      "smoothness": {"vessel": 0.5, "interior": "S_interior.fld", ...},
      "shapes": {"interior": {"kind": "simple", "vantage": [32, 32]}},
      "solver": {"c": 0.1, "tau": 0.1, "max_iters": 1000, "tol": 1e-4}
    }
"""
import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    InvalidHierarchy,
    MissingField,
    NegativeSmoothness,
    NonFiniteField,
    ParseError,
    ShapeMismatch,
    UnexpectedField,
    UnknownLabel,
)
from .fields import GridShape, read_fld, write_fld
from .hierarchy import SOURCE, LabelHierarchy
from .star import DirectionSpec


@dataclass(frozen=True)
class SolverConfig:
    """Parameters shared by both solvers.

    ``c`` weights the augmented term, ``tau`` is the flow ascent step,
    iteration stops once the largest label change drops below ``tol``.
    ``init`` selects the zero start or the unregularized min-cost start
    (augmented-Lagrangian solver only).
    """
    c: float = 0.1
    tau: float = 0.1
    max_iters: int = 1000
    tol: float = 1e-4
    record_trace: bool = True
    init: str = "zero"

    def __post_init__(self):
        for name in ("c", "tau", "tol"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive number, got {value!r}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters!r}")
        if self.init not in ("zero", "min_cost"):
            raise ValueError(f"init must be 'zero' or 'min_cost', got {self.init!r}")

    def replace(self, **changes):
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)


@dataclass(eq=False)
class Problem:
    """Everything a solver needs. Fields are keyed by label id."""
    hierarchy: LabelHierarchy
    grid: GridShape
    data_costs: dict
    smoothness: dict
    shapes: dict = field(default_factory=dict)
    config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        self._directions = None
        self.validate()

    def validate(self):
        h, dims = self.hierarchy, self.grid.dims
        for label in self.data_costs:
            if not h.is_leaf(label):
                raise UnexpectedField(f"data cost given for non-leaf {h.names[label]!r}")
        for label in h.leaves:
            if label not in self.data_costs:
                raise MissingField(f"data_costs.{h.names[label]}")
        for label in range(1, h.n_labels):
            if label not in self.smoothness:
                raise MissingField(f"smoothness.{h.names[label]}")
        if SOURCE in self.smoothness or SOURCE in self.shapes:
            raise UnexpectedField("the source carries no smoothness or shape")
        for kind, table in (("data cost", self.data_costs), ("smoothness", self.smoothness)):
            for label, arr in table.items():
                arr = np.asarray(arr, dtype=float)
                if arr.shape != dims:
                    raise ShapeMismatch(
                        f"{kind} for {h.names[label]!r} has shape {arr.shape}, grid is {dims}")
                if not np.all(np.isfinite(arr)):
                    raise NonFiniteField(f"{kind} for {h.names[label]!r} is not finite")
                table[label] = arr
        for label, arr in self.smoothness.items():
            if np.any(arr < 0):
                raise NegativeSmoothness(f"smoothness for {h.names[label]!r} is negative")
        for label, spec in list(self.shapes.items()):
            h._check(label)
            if spec is None:
                del self.shapes[label]
            elif not isinstance(spec, DirectionSpec):
                raise TypeError(f"shape for {h.names[label]!r} must be a DirectionSpec")

    @property
    def directions(self):
        """Resolved direction fields, ``None`` for unconstrained labels."""
        if self._directions is None:
            self._directions = {
                label: (self.shapes[label].resolve(self.grid) if label in self.shapes else None)
                for label in range(1, self.hierarchy.n_labels)
            }
        return self._directions

    def with_config(self, config):
        p = Problem(self.hierarchy, self.grid, dict(self.data_costs), dict(self.smoothness),
                    dict(self.shapes), config)
        p._directions = self._directions
        return p

    def without_shapes(self):
        return Problem(self.hierarchy, self.grid, dict(self.data_costs), dict(self.smoothness),
                       {}, self.config)

    def leaf_costs(self):
        return np.stack([self.data_costs[L] for L in self.hierarchy.leaves])


def _key(h, label):
    if isinstance(label, str):
        return h.label_id(label)
    h._check(label)
    return label


def make_problem(hierarchy, grid, data_costs, smoothness, shapes=None, config=None):
    """Convenience constructor accepting label names or ids and scalar smoothness.

    ``smoothness`` may be a single number applied to every non-source label.
    """
    if not isinstance(grid, GridShape):
        grid = GridShape(tuple(grid))
    h = hierarchy
    D = {_key(h, k): np.asarray(v, dtype=float) for k, v in data_costs.items()}
    if np.isscalar(smoothness):
        smoothness = {L: smoothness for L in range(1, h.n_labels)}
    S = {}
    for k, v in smoothness.items():
        S[_key(h, k)] = np.full(grid.dims, float(v)) if np.isscalar(v) else np.asarray(v, float)
    shp = {}
    for k, v in (shapes or {}).items():
        if v is None:
            continue
        if isinstance(v, dict):
            v = DirectionSpec(**v)
        shp[_key(h, k)] = v
    return Problem(h, grid, D, S, shp, config or SolverConfig())


# JSON + FLD persistence

def _read_raster(base, ref, what):
    if not isinstance(ref, str):
        raise ParseError(f"{what}: expected a file path, got {ref!r}")
    path = os.path.join(base, ref)
    if not os.path.exists(path):
        raise ParseError(f"{what}: file not found: {path}")
    return read_fld(path)


def load_problem(path):
    """Read and fully validate a problem config. Fails fast on any inconsistency."""
    base = os.path.dirname(os.path.abspath(path))
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")
    for key in ("grid", "labels", "data_costs", "smoothness"):
        if key not in doc:
            raise MissingField(key)
    try:
        grid = GridShape(tuple(doc["grid"]["dims"]), doc["grid"].get("spacing"))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad grid section: {doc['grid']!r}") from exc
    h = LabelHierarchy.from_records(doc["labels"])

    def label_of(name):
        try:
            return h.label_id(name)
        except UnknownLabel:
            raise InvalidHierarchy(f"unknown label {name!r}") from None

    D = {label_of(n): _read_raster(base, ref, f"data_costs.{n}")
         for n, ref in doc["data_costs"].items()}
    S = {}
    for n, ref in doc["smoothness"].items():
        if isinstance(ref, (int, float)) and not isinstance(ref, bool):
            S[label_of(n)] = np.full(grid.dims, float(ref))
        else:
            S[label_of(n)] = _read_raster(base, ref, f"smoothness.{n}")
    shapes = {}
    for n, spec in (doc.get("shapes") or {}).items():
        if spec is None:
            continue
        if not isinstance(spec, dict) or "kind" not in spec:
            raise ParseError(f"shapes.{n}: expected an object with 'kind'")
        kind = spec["kind"]
        if kind == "simple":
            shapes[label_of(n)] = DirectionSpec("simple", vantage=tuple(spec["vantage"]))
        elif kind == "geodesic":
            metric = _read_raster(base, spec.get("metric"), f"shapes.{n}.metric")
            shapes[label_of(n)] = DirectionSpec("geodesic", vantage=tuple(spec["vantage"]),
                                                metric=metric)
        elif kind == "explicit":
            e = _read_raster(base, spec.get("field"), f"shapes.{n}.field")
            shapes[label_of(n)] = DirectionSpec("explicit", field=e)
        else:
            raise ParseError(f"shapes.{n}: unknown kind {kind!r}")
    try:
        config = SolverConfig(**doc.get("solver", {}))
    except TypeError as exc:
        raise ParseError(f"bad solver section: {exc}") from exc
    return Problem(h, grid, D, S, shapes, config)


def save_problem(problem, directory, name="problem.json"):
    """Write ``problem`` as JSON plus FLD rasters into ``directory``; returns the JSON path."""
    os.makedirs(directory, exist_ok=True)
    h = problem.hierarchy
    doc = {
        "grid": {"dims": list(problem.grid.dims), "spacing": list(problem.grid.spacing)},
        "labels": h.to_records(),
        "data_costs": {},
        "smoothness": {},
        "shapes": {},
        "solver": {k: v for k, v in dataclasses.asdict(problem.config).items()},
    }
    for label in h.leaves:
        fname = f"D_{h.names[label]}.fld"
        write_fld(os.path.join(directory, fname), problem.data_costs[label])
        doc["data_costs"][h.names[label]] = fname
    for label in range(1, h.n_labels):
        s = problem.smoothness[label]
        fname = f"S_{h.names[label]}.fld"
        write_fld(os.path.join(directory, fname), s)
        doc["smoothness"][h.names[label]] = fname
    for label, spec in sorted(problem.shapes.items()):
        n = h.names[label]
        if spec.kind == "simple":
            doc["shapes"][n] = {"kind": "simple", "vantage": [int(c) for c in spec.vantage]}
        elif spec.kind == "geodesic":
            fname = f"metric_{n}.fld"
            write_fld(os.path.join(directory, fname), spec.metric)
            doc["shapes"][n] = {"kind": "geodesic", "vantage": [int(c) for c in spec.vantage],
                                "metric": fname}
        else:
            fname = f"e_{n}.fld"
            write_fld(os.path.join(directory, fname), spec.field, vector=True)
            doc["shapes"][n] = {"kind": "explicit", "field": fname}
    path = os.path.join(directory, name)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return path
