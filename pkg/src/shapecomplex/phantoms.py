"""Synthetic test images with known ground truth.

Every phantom is a piecewise-constant image (background 0, vessel wall
0.5, object or vessel interior 1) plus uniform noise, turned into a
segmentation problem with data costs ``|image - mean_L|`` and a constant
smoothness weight.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import BadSize, UnknownPhantom
from .fields import GridShape
from .hierarchy import LabelHierarchy
from .problem import Problem, SolverConfig
from .star import DirectionSpec

NAMES = ("annulus", "cshape", "ushape", "bifurcation", "random")
MIN_SIZE = 16
SMOOTHNESS = 0.1
# geodesic stars use metric 1 + METRIC_SLOPE * (distance to the centreline);
# a smooth metric keeps the direction field bending with the tube, whereas a
# piecewise-constant tube metric gives 45-degree quantized directions on the
# 8-neighbour graph that cut across curved tubes
METRIC_SLOPE = 1.0


@dataclass(eq=False)
class Phantom:
    name: str
    problem: Problem
    ground_truth: np.ndarray  # leaf id per voxel
    image: np.ndarray


def _coords(n):
    x, y = np.meshgrid(np.arange(n, dtype=float), np.arange(n, dtype=float), indexing="ij")
    return x, y


def _dist_to_polyline(x, y, points):
    """Distance from every pixel to a piecewise-linear curve."""
    best = np.full(x.shape, np.inf)
    for (ax, ay), (bx, by) in zip(points[:-1], points[1:]):
        dx, dy = bx - ax, by - ay
        if dx == 0 and dy == 0:
            continue
        t = np.clip(((x - ax) * dx + (y - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
        best = np.minimum(best, np.hypot(x - ax - t * dx, y - ay - t * dy))
    return best


def _arc(cx, cy, r, a0, a1, n=64):
    t = np.linspace(a0, a1, n)
    return list(zip(cx + r * np.cos(t), cy + r * np.sin(t)))


def _tube(n, centerline, half_width):
    """Object mask and guiding metric for a tube around ``centerline``."""
    x, y = _coords(n)
    d = _dist_to_polyline(x, y, centerline)
    mask = d <= half_width
    return mask, 1.0 + METRIC_SLOPE * d


def _annulus(n, rng):
    x, y = _coords(n)
    c = (n - 1) / 2.0
    r = np.hypot(x - c, y - c)
    truth = np.where(r <= 0.15 * n, 3, np.where(r <= 0.3 * n, 2, 1))
    h = LabelHierarchy.from_records([
        {"name": "background", "parent": "source"},
        {"name": "vessel", "parent": "source"},
        {"name": "wall", "parent": "vessel"},
        {"name": "interior", "parent": "vessel"},
    ])
    # ids: background 1, vessel 2, wall 3, interior 4
    truth = np.choose(truth - 1, [1, 3, 4])
    means = {1: 0.0, 3: 0.5, 4: 1.0}
    v = (n // 2, n // 2)
    shapes = {2: DirectionSpec("simple", vantage=v), 4: DirectionSpec("simple", vantage=v)}
    return h, truth, means, shapes


def _object_hierarchy():
    return LabelHierarchy.from_records([
        {"name": "background", "parent": "source"},
        {"name": "object", "parent": "source"},
    ])


def _geodesic_object(n, centerline, half_width, vantage):
    mask, metric = _tube(n, centerline, half_width)
    truth = np.where(mask, 2, 1)
    shapes = {2: DirectionSpec("geodesic", vantage=vantage, metric=metric)}
    return _object_hierarchy(), truth, {1: 0.0, 2: 1.0}, shapes


def _cshape(n, rng):
    c = (n - 1) / 2.0
    r = 0.3 * n
    line = _arc(c, c, r, np.pi / 4, 7 * np.pi / 4)
    return _geodesic_object(n, line, 0.08 * n, (int(round(c - r)), int(round(c))))


def _ushape(n, rng):
    cx = (n - 1) / 2.0
    r, bottom, top = 0.2 * n, 0.2 * n, 0.85 * n
    line = [(cx - r, top), (cx - r, bottom + r)] \
        + _arc(cx, bottom + r, r, np.pi, 2 * np.pi) + [(cx + r, bottom + r), (cx + r, top)]
    return _geodesic_object(n, line, 0.07 * n, (int(round(cx)), int(round(bottom))))


def _bifurcation(n, rng):
    cx = (n - 1) / 2.0
    fork = (cx, 0.5 * n)
    trunk = [(cx, 0.1 * n), fork]
    left = [fork, (0.25 * n, 0.9 * n)]
    right = [fork, (0.75 * n, 0.9 * n)]
    x, y = _coords(n)
    hw = 0.07 * n
    d = np.minimum.reduce([_dist_to_polyline(x, y, p) for p in (trunk, left, right)])
    mask = d <= hw
    metric = 1.0 + METRIC_SLOPE * d
    truth = np.where(mask, 2, 1)
    vantage = (int(round(cx)), int(round(0.1 * n)))
    shapes = {2: DirectionSpec("geodesic", vantage=vantage, metric=metric)}
    return _object_hierarchy(), truth, {1: 0.0, 2: 1.0}, shapes


def _random(n, rng):
    h = LabelHierarchy.from_records([
        {"name": "dark", "parent": "source"},
        {"name": "mid", "parent": "source"},
        {"name": "bright", "parent": "source"},
    ])
    x, y = _coords(n)
    sites = rng.random((6, 2)) * (n - 1)
    d = np.stack([np.hypot(x - sx, y - sy) for sx, sy in sites])
    owner = np.argmin(d, axis=0)
    site_label = np.arange(6) % 3 + 1
    truth = site_label[owner]
    return h, truth, {1: 0.0, 2: 0.5, 3: 1.0}, {}


_BUILDERS = {
    "annulus": _annulus,
    "cshape": _cshape,
    "ushape": _ushape,
    "bifurcation": _bifurcation,
    "random": _random,
}


def synth(name, size=64, noise_level=0.5, seed=0, smoothness=SMOOTHNESS, config=None):
    """Build phantom ``name`` on a ``size x size`` grid.

    The same arguments always give bitwise-identical problems. Images and
    costs are rounded to float32 so a saved problem reloads exactly.
    """
    if name not in _BUILDERS:
        raise UnknownPhantom(f"unknown phantom {name!r}; choose from {', '.join(NAMES)}")
    if int(size) != size or size < MIN_SIZE:
        raise BadSize(f"phantom size must be an integer >= {MIN_SIZE}, got {size!r}")
    if not np.isfinite(noise_level) or noise_level < 0:
        raise ValueError(f"noise_level must be >= 0, got {noise_level!r}")
    size = int(size)
    rng = np.random.default_rng(seed)
    h, truth, means, shapes = _BUILDERS[name](size, rng)
    clean = np.zeros(truth.shape)
    for L, mu in means.items():
        clean[truth == L] = mu
    noise = rng.uniform(-noise_level, noise_level, truth.shape) if noise_level > 0 else 0.0
    image = (clean + noise).astype(np.float32).astype(float)
    grid = GridShape((size, size))
    D = {L: np.abs(image - mu).astype(np.float32).astype(float) for L, mu in means.items()}
    S = {L: np.full(grid.dims, float(np.float32(smoothness))) for L in range(1, h.n_labels)}
    shapes = {L: _f32_spec(s) for L, s in shapes.items()}
    problem = Problem(h, grid, D, S, shapes, config or SolverConfig())
    return Phantom(name, problem, truth.astype(int), image)


def _f32_spec(spec):
    if spec.metric is None:
        return spec
    return DirectionSpec(spec.kind, spec.vantage, spec.metric.astype(np.float32).astype(float))


def dice(labeling, truth, label_ids):
    """Dice overlap of ``labeling`` against ``truth`` for the union of ``label_ids``."""
    a = np.isin(labeling, label_ids)
    b = np.isin(truth, label_ids)
    denom = a.sum() + b.sum()
    return 1.0 if denom == 0 else 2.0 * float(np.logical_and(a, b).sum()) / float(denom)
