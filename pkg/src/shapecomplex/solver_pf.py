"""Pseudo-flow solver: multiplicative leaf updates with hierarchical cost accumulation.

Leaf labels live on the probability simplex at every voxel. Each iteration
accumulates flow divergences down the tree into per-leaf costs, applies an
exponentiated update to the leaves, then pushes the normalized leaf
values back up the tree as the ascent direction for every spatial flow.
The capacity projection exempts the flow component along each label's
direction field, exactly as in the augmented-Lagrangian solver.
"""
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .energy import energy, hard_labeling
from .exceptions import NotConverged
from .fields import divergence, gradient, project_ball
from .hierarchy import SOURCE, bottom_up_order, top_down_order
from .solver_al import SolveResult, TraceRecord
from .star import exemption

EXP_CLAMP = 500.0
# Lower bound on unnormalized leaf values. Keeps multiplicative updates
# strictly positive and bounds how deep a losing leaf can sink, which in
# turn bounds how long a leaf that should win back a voxel stays stuck.
U_FLOOR = 1e-12


@dataclass
class PfState:
    u: dict
    q: dict
    d: dict
    a: np.ndarray
    div_q: dict = field(default_factory=dict)
    max_du: float = np.inf
    max_ddiv: float = np.inf
    clamp_active: bool = False


def pf_initialize(problem):
    """Uniform leaves ``1/|leaves|``, zero flows and scratch."""
    h, grid = problem.hierarchy, problem.grid
    k = len(h.leaves)
    labels = range(1, h.n_labels)
    return PfState(
        u={L: np.full(grid.dims, 1.0 / k) for L in h.leaves},
        q={L: grid.zeros_vector() for L in labels},
        d={L: grid.zeros() for L in labels},
        a=np.ones(grid.dims),
    )


def pf_iterate(state, problem, normalized_ascent=True):
    """One sweep: accumulate costs top-down, update leaves, then flows bottom-up.

    The spatial flows ascend along the leaf labels pushed up the tree.
    By default these are the normalized leaves, i.e. the gradient of the
    entropy-smoothed dual; ``normalized_ascent=False`` uses the values
    before normalization instead, which rescales every voxel's step by the
    partition sum and biases the fixed point when ``c`` is small.
    """
    h, cfg, spacing = problem.hierarchy, problem.config, problem.grid.spacing
    c, tau = cfg.c, cfg.tau
    leaves = h.leaves
    directions = problem.directions

    max_ddiv = 0.0
    for L in state.d:
        div = divergence(state.q[L], spacing)
        if L in state.div_q:
            max_ddiv = max(max_ddiv, float(np.max(np.abs(div - state.div_q[L]))))
        else:
            max_ddiv = np.inf
        state.div_q[L] = div
        state.d[L] = div.copy()
    for L in leaves:
        state.d[L] = state.d[L] + problem.data_costs[L]
    for L in top_down_order(h)[1:]:
        for k in h.children(L):
            state.d[k] = state.d[k] + state.d[L]

    old = {L: state.u[L] for L in leaves}
    clamped = False
    for L in leaves:
        arg = -state.d[L] / c
        if np.any(np.abs(arg) > EXP_CLAMP):
            clamped = True
            arg = np.clip(arg, -EXP_CLAMP, EXP_CLAMP)
        state.u[L] = np.maximum(state.u[L] * np.exp(arg), U_FLOOR)
        if not normalized_ascent:
            state.d[L] = state.u[L]
    state.a = sum(state.u[L] for L in leaves)
    for L in leaves:
        state.u[L] = state.u[L] / state.a
        if normalized_ascent:
            state.d[L] = state.u[L]
    for L in h.branches:
        state.d[L] = np.zeros(problem.grid.dims)

    for L in bottom_up_order(h)[:-1]:
        q = state.q[L] - c * tau * gradient(state.d[L], spacing)
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
        parent = h.parent(L)
        if parent != SOURCE:
            state.d[parent] = state.d[parent] + state.d[L]

    state.max_du = max(float(np.max(np.abs(state.u[L] - old[L]))) for L in leaves)
    state.max_ddiv = max_ddiv
    state.clamp_active = clamped
    return state


def pf_run(problem, config=None, callback=None, normalized_ascent=True):
    """Iterate :func:`pf_iterate` until converged or ``max_iters``.

    Converged means the largest leaf change is below ``tol`` and so is the
    largest change in any flow divergence since the previous sweep. The
    second test guards against stopping while a suppressed leaf is still
    climbing back from the floor.
    """
    if config is not None:
        problem = problem.with_config(config)
    cfg, h = problem.config, problem.hierarchy
    t0 = time.perf_counter()
    state = pf_initialize(problem)
    trace = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        pf_iterate(state, problem, normalized_ascent)
        if cfg.record_trace:
            u = np.stack([state.u[L] for L in h.leaves])
            trace.append(TraceRecord(it, energy(u, problem).total, float("nan"), state.max_du))
        if callback is not None:
            callback(it, state)
        if state.max_du < cfg.tol and state.max_ddiv < cfg.tol:
            converged = True
            break
    if state.clamp_active:
        warnings.warn("exponent clamp still active at the final iteration", RuntimeWarning,
                      stacklevel=2)
    if not converged:
        warnings.warn(f"pseudo-flow solver stopped after {it} iterations "
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
