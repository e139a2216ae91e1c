"""Energy evaluation, constraint residuals and the exhaustive oracle.

All quantities are computed on the same grid discretization the solvers
use, so the oracle checks the discretized problem rather than the
continuum one.
"""
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import NoFeasibleLabeling, OracleViolation, ShapeMismatch, TooLarge
from .fields import dot, gradient, norm
from .hierarchy import SOURCE, bottom_up_order, descendant_leaves
from .star import StarWalker


@dataclass
class EnergyReport:
    data_term: float
    smoothness_term: float
    total: float
    leaf_sum_violation: float
    negativity: float
    star_violation: float
    branch_violation: float = 0.0

    def as_dict(self):
        return dict(self.__dict__)


def leaf_fields(u, hierarchy):
    """Normalize ``u`` to ``{leaf: array}``.

    ``u`` is either a mapping keyed by label id (branch entries allowed and
    returned separately) or an array stacked in ``hierarchy.leaves`` order.
    """
    if isinstance(u, dict):
        leaves = {L: np.asarray(u[L], dtype=float) for L in hierarchy.leaves if L in u}
        if len(leaves) != len(hierarchy.leaves):
            missing = [hierarchy.names[L] for L in hierarchy.leaves if L not in u]
            raise ShapeMismatch(f"no labeling for leaves {missing}")
        return leaves
    u = np.asarray(u, dtype=float)
    if u.shape[0] != len(hierarchy.leaves):
        raise ShapeMismatch(f"expected {len(hierarchy.leaves)} leaf fields, got {u.shape[0]}")
    return dict(zip(hierarchy.leaves, u))


def derive_labels(leaves, hierarchy):
    """Extend leaf labelings to every non-source label (branch = sum of children)."""
    out = dict(leaves)
    for L in bottom_up_order(hierarchy):
        if L == SOURCE or hierarchy.is_leaf(L):
            continue
        out[L] = sum(out[c] for c in hierarchy.children(L))
    return out


def one_hot(labeling, hierarchy):
    """Leaf indicator fields for a hard labeling given as leaf ids."""
    labeling = np.asarray(labeling)
    return np.stack([(labeling == L).astype(float) for L in hierarchy.leaves])


def hard_labeling(u, hierarchy):
    """Argmax over leaf fields; ties go to the lowest label id."""
    leaves = leaf_fields(u, hierarchy)
    order = sorted(leaves)
    stack = np.stack([leaves[L] for L in order])
    return np.asarray(order)[np.argmax(stack, axis=0)]


def energy(u, problem):
    """Discrete energy of a (relaxed or hard) labeling plus constraint residuals."""
    h, grid = problem.hierarchy, problem.grid
    leaves = leaf_fields(u, h)
    for L, arr in leaves.items():
        if arr.shape != grid.dims:
            raise ShapeMismatch(f"labeling for {h.names[L]!r} has shape {arr.shape}")
    full = derive_labels(leaves, h)
    vol = grid.voxel_volume

    branch_violation = 0.0
    if isinstance(u, dict):
        for L in h.branches:
            if L in u:
                diff = np.max(np.abs(np.asarray(u[L], dtype=float) - full[L]))
                branch_violation = max(branch_violation, float(diff))

    data = sum(float(np.sum(problem.data_costs[L] * leaves[L])) for L in h.leaves) * vol
    smooth = 0.0
    star = 0.0
    directions = problem.directions
    for L in range(1, h.n_labels):
        g = gradient(full[L], grid.spacing)
        smooth += float(np.sum(problem.smoothness[L] * norm(g)))
        e = directions.get(L)
        if e is not None:
            star += float(np.sum(np.maximum(0.0, -dot(g, e))))
    smooth *= vol
    star *= vol
    stack = np.stack([leaves[L] for L in h.leaves])
    return EnergyReport(
        data_term=data,
        smoothness_term=smooth,
        total=data + smooth,
        leaf_sum_violation=float(np.max(np.abs(stack.sum(axis=0) - 1.0))),
        negativity=float(max(0.0, -stack.min())),
        star_violation=star,
        branch_violation=branch_violation,
    )


def labeling_energy(labeling, problem):
    return energy(one_hot(labeling, problem.hierarchy), problem).total


def star_feasible(labeling, problem, walkers=None):
    """True if every constrained label's hard mask passes the star check."""
    h = problem.hierarchy
    walkers = walkers or _walkers(problem)
    labeling = np.asarray(labeling)
    for L, walker in walkers.items():
        mask = np.isin(labeling, sorted(descendant_leaves(h, L))).astype(float)
        if walker.violations(mask).any():
            return False
    return True


def _walkers(problem):
    return {L: StarWalker(e, problem.grid.spacing)
            for L, e in problem.directions.items() if e is not None}


@dataclass
class OracleResult:
    best_labeling: np.ndarray
    best_energy: float
    feasible_count: int


def brute_force(problem, max_voxels=None, chunk=1 << 15):
    """Enumerate every hard labeling and return the cheapest star-feasible one.

    Labelings are enumerated in lexicographic order of the assignment
    vector (raster order, x fastest), so ties resolve to the smallest one.
    """
    h, grid = problem.hierarchy, problem.grid
    leaves = np.asarray(h.leaves)
    k, n = len(leaves), grid.size
    if n * math.log2(k) > 24 or (max_voxels is not None and n > max_voxels):
        raise TooLarge(f"{k}^{n} labelings is beyond the enumeration bound")

    dims = grid.dims
    D = np.stack([problem.data_costs[L].ravel(order="F") for L in leaves])
    vol = grid.voxel_volume
    walkers = _walkers(problem)
    members = {L: np.isin(leaves, sorted(descendant_leaves(h, L))) for L in range(1, h.n_labels)}
    smooth = {L: problem.smoothness[L] for L in range(1, h.n_labels)}
    powers = k ** np.arange(n - 1, -1, -1, dtype=np.int64)

    total = k ** n
    best_e, best_idx, feasible = math.inf, -1, 0
    energies_seen = []
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        assign = (idx[:, None] // powers[None, :]) % k  # (B, n) leaf positions
        e_batch = D[assign, np.arange(n)[None, :]].sum(axis=1) * vol
        ok = np.ones(idx.size, dtype=bool)
        for L in range(1, h.n_labels):
            ind = members[L][assign].astype(float)
            vol_fields = ind.reshape((-1,) + dims[::-1]).transpose(
                (0,) + tuple(range(len(dims), 0, -1)))
            tv = _batched_tv(vol_fields, grid.spacing)
            e_batch += (tv * smooth[L]).reshape(idx.size, -1).sum(axis=1) * vol
            if L in walkers:
                ok &= ~walkers[L].violations(vol_fields).reshape(idx.size, -1).any(axis=1)
        feasible += int(ok.sum())
        if ok.any():
            cand = np.flatnonzero(ok)
            j = cand[np.argmin(e_batch[cand])]
            if e_batch[j] < best_e:
                best_e, best_idx = float(e_batch[j]), int(idx[j])
            energies_seen.append(float(e_batch[cand].min()))
    if best_idx < 0:
        raise NoFeasibleLabeling("no labeling satisfies the star constraints")
    if any(v < best_e for v in energies_seen):
        raise OracleViolation("enumeration minimum is not the global minimum")
    assign = (best_idx // powers) % k
    labeling = leaves[assign].reshape(dims, order="F")
    return OracleResult(labeling, best_e, feasible)


def _batched_tv(fields, spacing):
    """Per-voxel |forward-difference gradient| for a batch ``(B, *dims)``."""
    sq = np.zeros(fields.shape)
    for ax, hx in enumerate(spacing):
        a = ax + 1
        n = fields.shape[a]
        if n == 1:
            continue
        lo = [slice(None)] * fields.ndim
        hi = [slice(None)] * fields.ndim
        lo[a] = slice(0, n - 1)
        hi[a] = slice(1, n)
        d = (fields[tuple(hi)] - fields[tuple(lo)]) / hx
        sq[tuple(lo)] += d * d
    return np.sqrt(sq)


@dataclass
class Verdict:
    oracle_energy: float
    solver_energy: float
    gap: float
    relative_gap: float
    feasible_count: int
    solver_feasible: bool
    passed: bool
    error: str = None

    def as_json(self):
        out = {
            "oracle_energy": self.oracle_energy,
            "solver_energy": self.solver_energy,
            "gap": self.gap,
            "feasible_count": self.feasible_count,
            "pass": self.passed,
        }
        if self.error:
            out["error"] = self.error
        return out


def compare(labeling, oracle, problem, threshold=0.05, atol=1e-9):
    """Judge a solver's hard labeling against the oracle optimum.

    Passes when the energy gap is within ``threshold`` relative to the
    oracle energy (plus ``atol``). A feasible labeling cheaper than the
    oracle means the oracle is broken and is flagged as an error.
    """
    solver_e = labeling_energy(labeling, problem)
    feasible = star_feasible(labeling, problem)
    gap = solver_e - oracle.best_energy
    scale = abs(oracle.best_energy)
    rel = gap / scale if scale > 0 else (0.0 if abs(gap) <= atol else math.inf)
    error = None
    if not feasible:
        error = "solver labeling violates a star constraint"
    elif gap < -atol:
        error = "oracle optimality violated"
    passed = error is None and gap <= threshold * scale + atol
    return Verdict(oracle.best_energy, solver_e, gap, rel, oracle.feasible_count,
                   feasible, passed, error)
