"""Direction fields for (geodesic) star convexity and the star-convexity checker.

A direction field ``e`` assigns each voxel either a unit vector pointing
toward the star's vantage point (straight, or along a geodesic) or the zero
vector when the voxel is unconstrained. A labeling ``u`` obeys the shape
constraint when ``grad u . e >= 0`` everywhere.
"""
import itertools
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from .exceptions import (
    InvalidDirectionField,
    NonBinaryMask,
    NonPositiveMetric,
    ShapeMismatch,
    VantageOutOfBounds,
)
from .fields import GridShape, dot, norm

UNIT_TOL = 1e-6


@dataclass(frozen=True)
class DirectionSpec:
    """How to build one label's direction field.

    ``kind`` is ``"simple"`` (needs ``vantage``), ``"geodesic"`` (needs
    ``vantage`` and a positive ``metric`` raster) or ``"explicit"`` (needs a
    ``field`` of shape ``(ndim, *dims)``).
    """
    kind: str
    vantage: tuple = None
    metric: np.ndarray = None
    field: np.ndarray = None

    def resolve(self, grid):
        if self.kind == "simple":
            return simple_star_field(grid, self.vantage)
        if self.kind == "geodesic":
            return geodesic_star_field(grid, self.vantage, self.metric)
        if self.kind == "explicit":
            return normalize_direction_field(self.field, grid)
        raise ValueError(f"unknown direction kind {self.kind!r}")


def _as_grid(grid):
    return grid if isinstance(grid, GridShape) else GridShape(tuple(grid))


def _check_vantage(grid, vantage):
    try:
        v = tuple(int(c) for c in vantage)
    except TypeError:
        raise VantageOutOfBounds(f"bad vantage {vantage!r}") from None
    if len(v) != grid.ndim or any(not 0 <= c < d for c, d in zip(v, grid.dims)):
        raise VantageOutOfBounds(f"vantage {vantage} outside grid {grid.dims}")
    return v


def _coords(grid):
    axes = [np.arange(d) * h for d, h in zip(grid.dims, grid.spacing)]
    return np.stack(np.meshgrid(*axes, indexing="ij"))


def simple_star_field(grid, vantage):
    """Unit vectors pointing straight at ``vantage``; zero at the vantage itself."""
    grid = _as_grid(grid)
    v = _check_vantage(grid, vantage)
    c = np.array([vi * h for vi, h in zip(v, grid.spacing)], dtype=float)
    diff = c.reshape((-1,) + (1,) * grid.ndim) - _coords(grid)
    mag = norm(diff)
    e = np.zeros_like(diff)
    nz = mag > 0
    e[:, nz] = diff[:, nz] / mag[nz]
    return e


def _neighbour_offsets(ndim):
    """Half of the full (8 / 26) neighbourhood; each undirected edge once."""
    out = []
    for off in itertools.product((-1, 0, 1), repeat=ndim):
        if any(off) and off > (0,) * ndim:
            out.append(off)
    return out


def grid_graph(grid, metric):
    """Sparse undirected grid graph, edge weight = mean endpoint metric * step length."""
    grid = _as_grid(grid)
    metric = np.asarray(metric, dtype=float)
    if metric.shape != grid.dims:
        raise ShapeMismatch(f"metric {metric.shape} vs grid {grid.dims}")
    if not np.all(np.isfinite(metric)) or np.any(metric <= 0):
        raise NonPositiveMetric("geodesic metric must be finite and > 0")
    idx = np.arange(grid.size).reshape(grid.dims)
    rows, cols, vals = [], [], []
    h = np.array(grid.spacing)
    for off in _neighbour_offsets(grid.ndim):
        src = tuple(slice(max(0, -o), d - max(0, o)) for o, d in zip(off, grid.dims))
        dst = tuple(slice(max(0, o), d - max(0, -o)) for o, d in zip(off, grid.dims))
        step = float(np.linalg.norm(np.array(off) * h))
        rows.append(idx[src].ravel())
        cols.append(idx[dst].ravel())
        vals.append((0.5 * (metric[src] + metric[dst]) * step).ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(grid.size, grid.size))


def geodesic_distance(grid, vantage, metric):
    """Shortest-path distance from ``vantage`` over the full-neighbourhood grid graph."""
    grid = _as_grid(grid)
    v = _check_vantage(grid, vantage)
    graph = grid_graph(grid, metric)
    src = int(np.ravel_multi_index(v, grid.dims))
    dist = dijkstra(graph, directed=False, indices=src)
    return dist.reshape(grid.dims)


def geodesic_star_field(grid, vantage, metric):
    """Unit vectors pointing down the geodesic distance toward ``vantage``.

    Zero at the vantage and wherever the distance gradient vanishes.
    """
    grid = _as_grid(grid)
    v = _check_vantage(grid, vantage)
    g = geodesic_distance(grid, v, metric)
    grad = np.stack([np.gradient(g, h, axis=ax) if g.shape[ax] > 1 else np.zeros_like(g)
                     for ax, h in enumerate(grid.spacing)])
    mag = norm(grad)
    e = np.zeros_like(grad)
    ok = mag >= 1e-9
    e[:, ok] = -grad[:, ok] / mag[ok]
    e[(slice(None),) + v] = 0.0
    return e


def normalize_direction_field(field, grid=None, tol=1e-3):
    """Validate an explicit field: each vector must be unit length or zero within ``tol``.

    Vectors shorter than ``tol`` are snapped to zero and the rest are
    rescaled to exact unit length.
    """
    e = np.array(field, dtype=float)
    if grid is not None:
        grid = _as_grid(grid)
        if e.shape != (grid.ndim,) + grid.dims:
            raise ShapeMismatch(f"direction field {e.shape} vs grid {grid.dims}")
    if not np.all(np.isfinite(e)):
        raise InvalidDirectionField("non-finite direction vectors")
    mag = norm(e)
    zero = mag < tol
    bad = ~zero & (np.abs(mag - 1.0) > tol)
    if np.any(bad):
        raise InvalidDirectionField(
            f"{int(bad.sum())} direction vectors are neither unit length nor zero")
    e[:, zero] = 0.0
    e[:, ~zero] /= mag[~zero]
    return e


def check_unit_or_zero(e, tol=UNIT_TOL):
    mag = norm(e)
    return bool(np.all((mag == 0) | (np.abs(mag - 1.0) <= tol)))


def exemption(q, e):
    """Length of the flow component exempt from the capacity: ``max(0, q . e)``."""
    return np.maximum(0.0, dot(q, e))


# star convexity checker

class StarWalker:
    """Precomputed walks for checking star convexity against a fixed ``e``.

    Every voxel with ``e != 0`` walks in half-voxel steps along the field
    until it reaches a voxel where ``e == 0`` (the vantage) or leaves the
    grid. Each position visited becomes a linear functional on the mask
    (multilinear interpolation, or the exact voxel value at the terminal
    voxel), so checking any number of masks reduces to one sparse product.
    """

    step = 0.5
    threshold = 0.5 - 1e-9

    def __init__(self, e, spacing=None):
        e = np.asarray(e, dtype=float)
        self.dims = e.shape[1:]
        self.ndim = len(self.dims)
        if e.shape[0] != self.ndim:
            raise ShapeMismatch(f"direction field of shape {e.shape}")
        self.size = int(np.prod(self.dims))
        h = np.ones(self.ndim) if spacing is None else np.asarray(spacing, dtype=float)
        # walk in index space
        d = e / h.reshape((-1,) + (1,) * self.ndim)
        dmag = norm(d)
        nz = dmag > 0
        d[:, nz] /= dmag[nz]
        self._dir = d.reshape(self.ndim, -1).T
        self._zero = ~nz.ravel()
        self.max_steps = 8 * int(sum(self.dims)) + 8
        self._build()

    def _build(self):
        dims = np.array(self.dims)
        # C-order strides, matching reshape(-1)
        cstrides = np.array([int(np.prod(self.dims[a + 1:])) for a in range(self.ndim)])
        corners = np.array(list(itertools.product((0, 1), repeat=self.ndim)))
        owner = np.flatnonzero(~self._zero)
        pos = np.stack(np.unravel_index(owner, self.dims), axis=1).astype(float)
        rows, cols, weights, sample_owner = [], [], [], []
        n_samples = 0
        for _ in range(self.max_steps):
            if owner.size == 0:
                break
            lin = np.clip(np.floor(pos + 0.5).astype(int), 0, dims - 1) @ cstrides
            term = self._zero[lin]
            if np.any(term):
                k = int(term.sum())
                rows.append(n_samples + np.arange(k))
                cols.append(lin[term])
                weights.append(np.ones(k))
                sample_owner.append(owner[term])
                n_samples += k
                keep = ~term
                pos, owner, lin = pos[keep], owner[keep], lin[keep]
            pos = pos + self.step * self._dir[lin]
            inside = np.all((pos >= -1e-9) & (pos <= dims - 1 + 1e-9), axis=1)
            pos, owner = np.clip(pos[inside], 0, dims - 1), owner[inside]
            if owner.size == 0:
                break
            ids = n_samples + np.arange(owner.size)
            sample_owner.append(owner)
            n_samples += owner.size
            base = np.minimum(np.floor(pos).astype(int), np.maximum(dims - 2, 0))
            frac = pos - base
            for corner in corners:
                idx = base + corner
                w = np.prod(np.where(corner == 1, frac, 1.0 - frac), axis=1)
                m = np.all(idx <= dims - 1, axis=1) & (w > 0)
                rows.append(ids[m])
                cols.append(idx[m] @ cstrides)
                weights.append(w[m])
        cat = lambda xs, dt: np.concatenate(xs) if xs else np.zeros(0, dt)
        self.n_samples = n_samples
        self._samples = sparse.csr_matrix(
            (cat(weights, float), (cat(rows, int), cat(cols, int))),
            shape=(n_samples, self.size))
        self._owner = sparse.csr_matrix(
            (np.ones(n_samples), (cat(sample_owner, int), np.arange(n_samples))),
            shape=(self.size, n_samples))

    def violations(self, masks):
        """Boolean violation maps for one mask ``dims`` or a batch ``(B, *dims)``."""
        masks = np.asarray(masks, dtype=float)
        single = masks.shape == tuple(self.dims)
        batch = masks.reshape(1 if single else masks.shape[0], self.size)
        vals = self._samples @ batch.T
        hits = self._owner @ (vals < self.threshold).astype(float)
        out = (hits.T > 0) & (batch > 0.5)
        return out.reshape(self.dims) if single else out.reshape((-1,) + tuple(self.dims))


@dataclass
class StarReport:
    violations: np.ndarray

    @property
    def n_violations(self):
        return int(self.violations.sum())

    @property
    def is_star_convex(self):
        return self.n_violations == 0

    def voxels(self):
        return [tuple(int(i) for i in ix) for ix in np.argwhere(self.violations)]


def check_binary(mask):
    mask = np.asarray(mask, dtype=float)
    if not np.all((mask == 0) | (mask == 1)):
        raise NonBinaryMask("mask values must be 0 or 1")
    return mask


def check_star_convex(mask, e, spacing=None, walker=None):
    """Report voxels of a binary ``mask`` whose walk along ``e`` leaves the mask.

    An empty violation set means the mask is (geodesically) star convex
    with respect to ``e``.
    """
    mask = check_binary(mask)
    e = np.asarray(e, dtype=float)
    if e.shape[1:] != mask.shape:
        raise ShapeMismatch(f"mask {mask.shape} vs direction field {e.shape}")
    if walker is None:
        walker = StarWalker(e, spacing)
    return StarReport(walker.violations(mask))
