import importlib
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapecomplex.energy import (
    OracleResult,
    brute_force,
    compare,
    energy,
    hard_labeling,
    labeling_energy,
    one_hot,
)
from shapecomplex.exceptions import NoFeasibleLabeling, ShapeMismatch, TooLarge
from shapecomplex.hierarchy import build_hierarchy, descendant_leaves, flat_hierarchy
from shapecomplex.problem import make_problem
from shapecomplex.star import DirectionSpec, StarWalker, check_star_convex

from problems import tiny_problem

energy_mod = importlib.import_module("shapecomplex.energy")


def _two_label(DA, DB, S, dims=None, shapes=None):
    h = flat_hierarchy(2, ["A", "B"])
    DA, DB = np.asarray(DA, float), np.asarray(DB, float)
    dims = dims or DA.shape
    return make_problem(h, dims, {"A": DA.reshape(dims), "B": DB.reshape(dims)}, S, shapes=shapes)


def test_zero_labeling_has_zero_energy():
    p = tiny_problem(1)
    u = np.zeros((len(p.hierarchy.leaves),) + p.grid.dims)
    assert energy(u, p).total == 0.0


def test_two_voxel_boundary_costs_two():
    p = _two_label([[0.0], [0.0]], [[0.0], [0.0]], 1.0)
    rep = energy(one_hot(np.array([[1], [2]]), p.hierarchy), p)
    assert rep.smoothness_term == 2.0 and rep.data_term == 0.0


def test_hard_labeling_data_term_is_assigned_cost_sum():
    p = tiny_problem(2)
    rng = np.random.default_rng(0)
    lab = rng.choice(p.hierarchy.leaves, size=p.grid.dims)
    expected = sum(p.data_costs[lab[ix]][ix] for ix in np.ndindex(p.grid.dims))
    assert math.isclose(energy(one_hot(lab, p.hierarchy), p).data_term, expected, rel_tol=1e-12)


def _reference_energy(u_leaves, problem):
    """Loop-based evaluation with branch labels summed from their leaves."""
    h = problem.hierarchy
    dims = problem.grid.dims
    hs = problem.grid.spacing
    vol = float(np.prod(hs))
    full = {}
    for L in range(1, h.n_labels):
        full[L] = sum(u_leaves[k] for k in sorted(descendant_leaves(h, L)))
    total = 0.0
    for ix in np.ndindex(dims):
        for L in range(1, h.n_labels):
            if h.is_leaf(L):
                total += problem.data_costs[L][ix] * full[L][ix] * vol
            g2 = 0.0
            for ax in range(len(dims)):
                if ix[ax] + 1 < dims[ax]:
                    nb = list(ix)
                    nb[ax] += 1
                    g2 += ((full[L][tuple(nb)] - full[L][ix]) / hs[ax]) ** 2
            total += problem.smoothness[L][ix] * math.sqrt(g2) * vol
    return total


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_energy_matches_loop_reference(seed):
    p = tiny_problem(seed)
    rng = np.random.default_rng(seed)
    u = rng.random((len(p.hierarchy.leaves),) + p.grid.dims)
    ref = _reference_energy(dict(zip(p.hierarchy.leaves, u)), p)
    assert math.isclose(energy(u, p).total, ref, rel_tol=1e-12, abs_tol=1e-12)


def test_energy_reports_residuals():
    p = tiny_problem(0)
    k = len(p.hierarchy.leaves)
    u = np.full((k,) + p.grid.dims, 1.0 / k)
    u[0, 0, 0] = -0.25
    rep = energy(u, p)
    assert rep.negativity == 0.25
    assert math.isclose(rep.leaf_sum_violation, 1.0 / k + 0.25)
    assert rep.total == rep.data_term + rep.smoothness_term
    with pytest.raises(ShapeMismatch):
        energy(np.zeros((k + 1,) + p.grid.dims), p)


def test_branch_inconsistent_u_is_reported():
    h = build_hierarchy([(0, 1), (0, 2), (2, 3), (2, 4)])
    dims = (3, 2)
    p = make_problem(h, dims, {L: np.zeros(dims) for L in h.leaves}, 0.0)
    u = {1: np.full(dims, 0.5), 3: np.full(dims, 0.25), 4: np.full(dims, 0.25),
         2: np.full(dims, 0.9)}
    rep = energy(u, p)
    assert math.isclose(rep.branch_violation, 0.4)


def test_star_residual():
    e_problem = _two_label(np.zeros((3, 1)), np.zeros((3, 1)), 0.0,
                           shapes={"A": DirectionSpec("simple", vantage=(1, 0))})
    u = one_hot(np.array([[1], [2], [1]]), e_problem.hierarchy)
    # forward difference at x=0 points toward the vantage and drops by one
    assert energy(u, e_problem).star_violation == 1.0


def test_hard_labeling_ties_go_to_lowest_id():
    h = flat_hierarchy(3)
    u = np.zeros((3, 2, 2))
    u[1] = u[2] = 0.5
    np.testing.assert_array_equal(hard_labeling(u, h), 2)
    np.testing.assert_array_equal(hard_labeling(np.zeros((3, 2, 2)), h), 1)


# oracle

def test_oracle_two_voxels_no_smoothness():
    p = _two_label([[0.0], [1.0]], [[1.0], [0.0]], 0.0)
    o = brute_force(p)
    np.testing.assert_array_equal(o.best_labeling, [[1], [2]])
    assert o.best_energy == 0.0 and o.feasible_count == 4


def test_oracle_two_voxels_strong_smoothness():
    p = _two_label([[0.0], [1.0]], [[1.0], [0.0]], 10.0)
    o = brute_force(p)
    np.testing.assert_array_equal(o.best_labeling, [[1], [1]])
    assert o.best_energy == 1.0


def test_oracle_filters_star_infeasible_labelings():
    # A is cheap on the outer voxels only; A is star constrained toward the centre
    DA = np.array([[0.0], [1.0], [0.0]])
    DB = np.array([[1.0], [0.0], [1.0]])
    p = _two_label(DA, DB, 0.0, shapes={"A": DirectionSpec("simple", vantage=(1, 0))})
    o = brute_force(p)
    e = p.directions[1]
    feasible = []
    for assign in itertools.product([1, 2], repeat=3):
        lab = np.array(assign).reshape(3, 1)
        if check_star_convex((lab == 1).astype(float), e).is_star_convex:
            feasible.append((labeling_energy(lab, p), assign))
    assert o.feasible_count == len(feasible) == 5
    best = min(feasible)
    assert o.best_energy == best[0] == 1.0
    assert tuple(o.best_labeling.ravel()) == best[1] == (1, 1, 1)
    assert (1, 2, 1) not in [a for _, a in feasible]


def _enumerate(problem):
    """Independent oracle: itertools enumeration, per-labeling star check."""
    h = problem.hierarchy
    dims = problem.grid.dims
    walkers = {L: (e, StarWalker(e)) for L, e in problem.directions.items() if e is not None}
    best = (math.inf, None)
    for assign in itertools.product(h.leaves, repeat=problem.grid.size):
        lab = np.array(assign).reshape(dims, order="F")
        ok = all(
            check_star_convex(np.isin(lab, sorted(descendant_leaves(h, L))).astype(float), e,
                              walker=w).is_star_convex
            for L, (e, w) in walkers.items())
        if ok:
            best = min(best, (labeling_energy(lab, problem), assign))
    return best


@pytest.mark.parametrize("seed", [0, 1, 5, 6])
def test_oracle_matches_independent_enumeration(seed):
    p = tiny_problem(seed, star=True)
    if p.grid.size * math.log2(len(p.hierarchy.leaves)) > 12:
        d = (min(p.grid.dims[0], 3), min(p.grid.dims[1], 2))
        cut = (slice(0, d[0]), slice(0, d[1]))
        p = make_problem(p.hierarchy, d, {L: D[cut] for L, D in p.data_costs.items()},
                         {L: S[cut] for L, S in p.smoothness.items()},
                         shapes={L: DirectionSpec("simple", vantage=(d[0] // 2, d[1] // 2))
                                 for L in p.shapes})
    o = brute_force(p)
    e_ref, assign = _enumerate(p)
    assert math.isclose(o.best_energy, e_ref, rel_tol=1e-12, abs_tol=1e-12)
    assert tuple(o.best_labeling.ravel(order="F")) == assign


def test_oracle_too_large():
    h = flat_hierarchy(3)
    with pytest.raises(TooLarge):
        brute_force(make_problem(h, (4, 4), {L: np.zeros((4, 4)) for L in h.leaves}, 0.0))
    with pytest.raises(TooLarge):
        brute_force(tiny_problem(0), max_voxels=2)


def test_oracle_no_feasible_labeling(monkeypatch):
    class RejectAll:
        def __init__(self, *a, **k):
            pass

        def violations(self, masks):
            return np.ones(np.shape(masks), bool)

    monkeypatch.setattr(energy_mod, "StarWalker", RejectAll)
    with pytest.raises(NoFeasibleLabeling):
        brute_force(tiny_problem(0, star=True))


# compare

def test_compare_identical_labeling():
    p = tiny_problem(4)
    o = brute_force(p)
    v = compare(o.best_labeling, o, p)
    assert v.gap == 0.0 and v.passed and v.error is None


def test_compare_threshold_arithmetic():
    p = _two_label([[1.02], [0.0]], [[5.0], [0.0]], 0.0)
    lab = np.array([[1], [2]])
    assert math.isclose(labeling_energy(lab, p), 1.02)
    oracle = OracleResult(lab, 1.00, 4)
    v = compare(lab, oracle, p, threshold=0.05)
    assert v.passed and math.isclose(v.gap, 0.02)
    assert not compare(lab, oracle, p, threshold=0.01).passed


def test_compare_flags_negative_gap():
    p = _two_label([[1.0], [0.0]], [[5.0], [0.0]], 0.0)
    lab = np.array([[1], [2]])
    v = compare(lab, OracleResult(lab, 2.0, 4), p)
    assert not v.passed and v.error == "oracle optimality violated"
    doc = v.as_json()
    assert set(doc) == {"oracle_energy", "solver_energy", "gap", "feasible_count", "pass", "error"}


def test_compare_flags_infeasible_solver_labeling():
    DA = np.array([[0.0], [1.0], [0.0]])
    DB = np.array([[1.0], [0.0], [1.0]])
    p = _two_label(DA, DB, 0.0, shapes={"A": DirectionSpec("simple", vantage=(1, 0))})
    o = brute_force(p)
    v = compare(np.array([[1], [2], [1]]), o, p)
    assert not v.passed and not v.solver_feasible
