"""Scalar and vector fields on regular 2D/3D grids.

Scalar fields are float64 arrays of shape ``dims``; array axis ``i`` is
grid axis ``i`` and axis 0 (x) is the fastest-varying one on disk.
Vector fields carry one leading component axis: ``(ndim, *dims)``.

``gradient`` is a forward difference with a zero last entry along each
axis and ``divergence`` is its exact negative adjoint, so
``<div q, u> == -<q, grad u>`` holds to rounding.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import NegativeCapacity, ParseError, ShapeMismatch

__all__ = [
    "GridShape", "gradient", "divergence", "project_ball", "dot", "norm",
    "read_fld", "write_fld",
]


@dataclass(frozen=True)
class GridShape:
    dims: tuple
    spacing: tuple = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) not in (2, 3):
            raise ShapeMismatch(f"grids are 2D or 3D, got dims {dims}")
        if any(d < 1 for d in dims):
            raise ShapeMismatch(f"non-positive grid dims {dims}")
        spacing = (1.0,) * len(dims) if self.spacing is None else tuple(float(s) for s in self.spacing)
        if len(spacing) != len(dims):
            raise ShapeMismatch(f"spacing {spacing} does not match dims {dims}")
        if not all(s > 0 and np.isfinite(s) for s in spacing):
            raise ShapeMismatch(f"spacing must be positive, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)

    @property
    def ndim(self):
        return len(self.dims)

    @property
    def size(self):
        return int(np.prod(self.dims))

    @property
    def voxel_volume(self):
        return float(np.prod(self.spacing))

    def zeros(self):
        return np.zeros(self.dims)

    def zeros_vector(self):
        return np.zeros((self.ndim,) + self.dims)


def _spacing(ndim, spacing):
    if spacing is None:
        return (1.0,) * ndim
    if len(spacing) != ndim:
        raise ShapeMismatch(f"spacing {spacing} for a {ndim}D field")
    return tuple(float(s) for s in spacing)


def gradient(u, spacing=None):
    """Forward-difference gradient; the last entry along each axis is 0."""
    u = np.asarray(u, dtype=float)
    h = _spacing(u.ndim, spacing)
    g = np.zeros((u.ndim,) + u.shape)
    for ax in range(u.ndim):
        lo = [slice(None)] * u.ndim
        hi = [slice(None)] * u.ndim
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        g[ax][tuple(lo)] = (u[tuple(hi)] - u[tuple(lo)]) / h[ax]
    return g


def divergence(q, spacing=None):
    """Backward-difference divergence, the negative adjoint of :func:`gradient`."""
    q = np.asarray(q, dtype=float)
    ndim = q.shape[0]
    if q.ndim != ndim + 1:
        raise ShapeMismatch(f"vector field of shape {q.shape} has {ndim} components")
    h = _spacing(ndim, spacing)
    out = np.zeros(q.shape[1:])
    for ax in range(ndim):
        qa = q[ax]
        n = qa.shape[ax]
        if n == 1:
            continue

        def sl(a, b):
            s = [slice(None)] * ndim
            s[ax] = slice(a, b)
            return tuple(s)

        # out[i] = (q[i] - q[i-1]) / h with q[-1] = 0 and q[n-1] treated as 0
        out[sl(0, n - 1)] += qa[sl(0, n - 1)] / h[ax]
        out[sl(1, n)] -= qa[sl(0, n - 1)] / h[ax]
    return out


def norm(q):
    """Pointwise Euclidean norm of a vector field."""
    return np.sqrt(np.sum(np.square(q), axis=0))


def dot(q, e):
    """Pointwise inner product of two vector fields."""
    q = np.asarray(q, dtype=float)
    e = np.asarray(e, dtype=float)
    if q.shape != e.shape:
        raise ShapeMismatch(f"{q.shape} vs {e.shape}")
    return np.einsum("i...,i...->...", q, e)


def project_ball(q, capacity):
    """Radially shrink ``q`` so that ``|q(x)| <= capacity(x)``.

    Vectors already inside the ball are returned bit-for-bit unchanged and
    zero vectors stay zero.
    """
    q = np.asarray(q, dtype=float)
    capacity = np.broadcast_to(np.asarray(capacity, dtype=float), q.shape[1:])
    if np.any(capacity < 0):
        raise NegativeCapacity("capacity must be non-negative")
    mag = norm(q)
    out = q.copy()
    over = mag > capacity
    if np.any(over):
        out[:, over] *= capacity[over] / mag[over]
        # rounding can leave |out| one ulp above the capacity; shrink those
        # so a second projection is a no-op
        for _ in range(8):
            still = norm(out) > capacity
            if not np.any(still):
                break
            out[:, still] *= 1.0 - 2.0 ** -52
    return out


# FLD files: ASCII header "FLD <ndim> <d0> .. <ncomp>\n", then float32 LE,
# x fastest, one contiguous block per component.

def write_fld(path, array, vector=False):
    """Write a scalar field (``vector=False``) or a vector field to ``path``."""
    a = np.asarray(array, dtype=float)
    if vector:
        comps = list(a)
        dims = a.shape[1:]
    else:
        comps = [a]
        dims = a.shape
    header = "FLD {} {} {}\n".format(len(dims), " ".join(str(d) for d in dims), len(comps))
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for comp in comps:
            fh.write(np.asarray(comp, dtype="<f4").ravel(order="F").tobytes())


def read_fld(path):
    """Read an FLD file.

    Returns a float64 array of shape ``dims`` when the file has one
    component and ``(ncomp, *dims)`` otherwise.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ParseError(f"{path}: missing FLD header")
    try:
        tokens = raw[:nl].decode("ascii").split()
        if tokens[0] != "FLD":
            raise ValueError("bad magic")
        ndim = int(tokens[1])
        dims = tuple(int(t) for t in tokens[2:2 + ndim])
        ncomp = int(tokens[2 + ndim])
        if len(tokens) != 3 + ndim or ndim not in (2, 3) or ncomp < 1 or min(dims) < 1:
            raise ValueError("bad header")
    except (ValueError, IndexError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: malformed FLD header") from exc
    count = int(np.prod(dims))
    body = raw[nl + 1:]
    if len(body) != 4 * count * ncomp:
        raise ParseError(f"{path}: expected {4 * count * ncomp} data bytes, found {len(body)}")
    data = np.frombuffer(body, dtype="<f4").astype(float)
    comps = [data[k * count:(k + 1) * count].reshape(dims, order="F") for k in range(ncomp)]
    if not np.all(np.isfinite(data)):
        raise ParseError(f"{path}: non-finite values")
    if ncomp == 1:
        return comps[0]
    return np.stack(comps)
