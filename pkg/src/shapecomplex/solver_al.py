"""Augmented-Lagrangian hierarchical max-flow with star-convexity exemption flows.

Each iteration performs, for every non-source label, a projected ascent
step on the spatial flow ``q`` in which the component along the label's
direction field is exempt from the capacity; then the sink flows ``p`` are
maximized in closed form bottom-up through the tree; finally the labels
``u`` (the multipliers of flow conservation) take a step of size ``c``
along the conservation residual.

Labels are processed one after another and every per-label update is a
vectorized numpy expression; no threads are used beyond whatever the
numpy backend does internally.
"""
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .energy import energy, hard_labeling
from .exceptions import NotConverged
from .fields import divergence, gradient, norm, project_ball
from .hierarchy import SOURCE, bottom_up_order, top_down_order
from .star import exemption


@dataclass
class TraceRecord:
    iteration: int
    energy: float
    max_G: float
    max_du: float


@dataclass
class AlState:
    u: dict
    q: dict
    p: dict
    div_q: dict
    max_du: float = np.inf

    def copy(self):
        cp = lambda d: {k: v.copy() for k, v in d.items()}
        return AlState(cp(self.u), cp(self.q), cp(self.p), cp(self.div_q), self.max_du)


@dataclass
class SolveResult:
    """Output of a solver run. ``u`` is stacked in ``hierarchy.leaves`` order."""
    u: np.ndarray
    labeling: np.ndarray
    trace: list
    converged: bool
    iterations: int
    state: object
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)


def initialize(problem):
    """All-zero labels and flows."""
    h, grid = problem.hierarchy, problem.grid
    labels = range(1, h.n_labels)
    state = AlState(
        u={L: grid.zeros() for L in labels},
        q={L: grid.zeros_vector() for L in labels},
        p={L: grid.zeros() for L in range(h.n_labels)},
        div_q={L: grid.zeros() for L in labels},
    )
    if problem.config.init == "min_cost":
        _min_cost_start(state, problem)
    return state


def _min_cost_start(state, problem):
    """Unregularized optimum: winner-take-all labels, sink flows at the cheapest cost."""
    h = problem.hierarchy
    costs = problem.leaf_costs()
    winner = np.asarray(h.leaves)[np.argmin(costs, axis=0)]
    floor = costs.min(axis=0)
    for L in state.p:
        state.p[L] = floor.copy()
    for L in h.leaves:
        state.u[L] = (winner == L).astype(float)
    for L in bottom_up_order(h):
        if h.is_branch(L):
            state.u[L] = sum(state.u[c] for c in h.children(L))


def residual(state, problem, label):
    """Flow conservation residual ``div q + p - p_parent``."""
    parent = problem.hierarchy.parent(label)
    return state.div_q[label] + state.p[label] - state.p[parent]


def update_spatial_flows(state, problem):
    """Projected ascent on every spatial flow.

    For labels with a direction field the flow component along it is
    removed before the capacity projection and restored afterwards.
    """
    h, cfg, spacing = problem.hierarchy, problem.config, problem.grid.spacing
    directions = problem.directions
    for L in top_down_order(h)[1:]:
        parent = h.parent(L)
        arg = state.div_q[L] + state.p[L] - state.p[parent] - state.u[L] / cfg.c
        q = state.q[L] + cfg.tau * gradient(arg, spacing)
        e = directions.get(L)
        if e is not None:
            lam = exemption(q, e)
            active = lam > 0
            q[:, active] -= lam[active] * e[:, active]
            q = project_ball(q, problem.smoothness[L])
            q[:, active] += lam[active] * e[:, active]
        else:
            q = project_ball(q, problem.smoothness[L])
        state.q[L] = q
        state.div_q[L] = divergence(q, spacing)
    return state


def update_sink_flows(state, problem):
    """Closed-form maximization over every ``p``, children before parents.

    A label's update reads only its parent and its children, so any
    bottom-up order reproduces the depth-first recursion exactly.
    """
    h, c = problem.hierarchy, problem.config.c
    for L in bottom_up_order(h):
        if L == SOURCE:
            acc = np.full(problem.grid.dims, 1.0 / c)
            for k in h.children(L):
                acc += state.p[k] + state.div_q[k] - state.u[k] / c
            state.p[L] = acc / len(h.children(L))
        elif h.is_leaf(L):
            parent = h.parent(L)
            state.p[L] = np.minimum(
                problem.data_costs[L],
                state.p[parent] - state.div_q[L] + state.u[L] / c)
        else:
            parent = h.parent(L)
            acc = state.p[parent] - state.div_q[L] + state.u[L] / c
            for k in h.children(L):
                acc = acc + state.p[k] + state.div_q[k] - state.u[k] / c
            state.p[L] = acc / (len(h.children(L)) + 1)
    return state


def update_labels(state, problem):
    """Multiplier step ``u -= c * G``; records the largest change."""
    h, c = problem.hierarchy, problem.config.c
    max_du = 0.0
    for L in range(1, h.n_labels):
        du = c * residual(state, problem, L)
        state.u[L] = state.u[L] - du
        max_du = max(max_du, float(np.max(np.abs(du))))
    state.max_du = max_du
    return state


def iterate(state, problem):
    update_spatial_flows(state, problem)
    update_sink_flows(state, problem)
    update_labels(state, problem)
    return state


def max_residual(state, problem):
    return max(float(np.max(np.abs(residual(state, problem, L))))
               for L in range(1, problem.hierarchy.n_labels))


def capacity_violation(q, problem):
    """Largest ``|q - lambda e| - S`` over all labels (<= 0 when feasible)."""
    worst = -np.inf
    for L, qL in q.items():
        e = problem.directions.get(L)
        free = qL if e is None else qL - exemption(qL, e) * e
        worst = max(worst, float(np.max(norm(free) - problem.smoothness[L])))
    return worst


def normalized_leaves(u, hierarchy):
    """Leaf labels clipped to be non-negative and rescaled to sum to one."""
    stack = np.stack([np.maximum(u[L], 0.0) for L in hierarchy.leaves])
    total = stack.sum(axis=0)
    k = len(hierarchy.leaves)
    safe = total > 0
    out = np.full_like(stack, 1.0 / k)
    out[:, safe] = stack[:, safe] / total[safe]
    return out


def run(problem, config=None, callback=None):
    """Iterate to convergence (largest label change below ``tol``) or ``max_iters``.

    A run that does not converge still returns its result, flagged with
    ``converged=False`` and a :class:`NotConverged` warning.
    """
    if config is not None:
        problem = problem.with_config(config)
    cfg, h = problem.config, problem.hierarchy
    t0 = time.perf_counter()
    state = initialize(problem)
    trace = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        iterate(state, problem)
        if cfg.record_trace:
            e = energy(normalized_leaves(state.u, h), problem).total
            trace.append(TraceRecord(it, e, max_residual(state, problem), state.max_du))
        if callback is not None:
            callback(it, state)
        if state.max_du < cfg.tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"augmented-Lagrangian solver stopped after {it} iterations "
                      f"(max |du| = {state.max_du:.3g})", NotConverged, stacklevel=2)
    u = np.stack([state.u[L] for L in h.leaves])
    return SolveResult(
        u=u,
        labeling=hard_labeling(u, h),
        trace=trace,
        converged=converged,
        iterations=it,
        state=state,
        wall_time=time.perf_counter() - t0,
    )
