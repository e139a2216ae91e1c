"""scikit-learn style front end to the two solvers.

Segmentation is transductive: ``fit`` solves the problem posed by one
image, and ``predict`` / ``transform`` solve again for the image they are
given (returning the cached result when it is the fitted image).
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import solver_al, solver_pf
from .energy import energy
from .fields import GridShape
from .hierarchy import LabelHierarchy
from .problem import SolverConfig, make_problem
from .validation import check_costs, check_image, check_positive, check_spacing

SOLVERS = ("al", "pf")


class ShapeComplexSegmenter(TransformerMixin, BaseEstimator):
    """Hierarchical max-flow segmentation with optional star-convexity constraints.

    Parameters
    ----------
    hierarchy : list of {"name", "parent"} records or LabelHierarchy
    means : dict leaf name -> intensity, optional
        When given, ``X`` is an image and leaf costs are ``|X - mean|``.
        When omitted, ``X`` is already a stack of leaf costs in leaf order.
    smoothness : float or dict label name -> float
    shapes : dict label name -> DirectionSpec or dict, optional
    solver : "al" or "pf"
    c, tau, max_iters, tol, init : solver settings
    spacing : voxel size per axis, optional

    Attributes
    ----------
    u_ : relaxed leaf labelings, shape ``(n_leaves, *dims)``
    labels_ : hard labeling (leaf ids)
    trace_ : per-iteration records
    n_iter_, converged_, energy_
    """

    def __init__(self, hierarchy=None, means=None, smoothness=0.1, shapes=None, solver="al",
                 c=0.1, tau=0.1, max_iters=1000, tol=1e-4, init="zero", spacing=None):
        self.hierarchy = hierarchy
        self.means = means
        self.smoothness = smoothness
        self.shapes = shapes
        self.solver = solver
        self.c = c
        self.tau = tau
        self.max_iters = max_iters
        self.tol = tol
        self.init = init
        self.spacing = spacing

    def _hierarchy(self):
        if isinstance(self.hierarchy, LabelHierarchy):
            return self.hierarchy
        if self.hierarchy is None:
            raise ValueError("hierarchy is required")
        return LabelHierarchy.from_records(self.hierarchy)

    def _config(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        return SolverConfig(c=check_positive(self.c, "c"), tau=check_positive(self.tau, "tau"),
                            max_iters=self.max_iters, tol=check_positive(self.tol, "tol"),
                            init=self.init)

    def build_problem(self, X):
        """The segmentation problem ``fit`` would solve for ``X``."""
        h = self._hierarchy()
        if self.means is None:
            costs = check_costs(X, len(h.leaves))
            D = dict(zip(h.leaves, costs))
            dims = costs.shape[1:]
        else:
            image = check_image(X)
            D = {h.label_id(name): np.abs(image - float(mu)) for name, mu in self.means.items()}
            dims = image.shape
        if isinstance(self.smoothness, dict):
            S = dict(self.smoothness)
        else:
            S = check_positive(self.smoothness, "smoothness", allow_zero=True)
        grid = GridShape(dims, check_spacing(self.spacing, len(dims)))
        return make_problem(h, grid, D, S, shapes=self.shapes, config=self._config())

    def _solve(self, X):
        problem = self.build_problem(X)
        run = solver_al.run if self.solver == "al" else solver_pf.pf_run
        return problem, run(problem)

    def fit(self, X, y=None):
        problem, result = self._solve(X)
        self._X_fit = np.array(X, dtype=float, copy=True)
        self.problem_ = problem
        self.result_ = result
        self.u_ = result.u
        self.labels_ = result.labeling
        self.trace_ = result.trace
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        u = result.u if self.solver == "pf" else solver_al.normalized_leaves(
            result.state.u, problem.hierarchy)
        self.energy_ = energy(u, problem).total
        return self

    def _result_for(self, X):
        check_is_fitted(self, "labels_")
        X = np.asarray(X, dtype=float)
        if X.shape == self._X_fit.shape and np.array_equal(X, self._X_fit):
            return self.result_
        return self._solve(X)[1]

    def predict(self, X):
        """Hard labeling (leaf ids) for ``X``."""
        return self._result_for(X).labeling

    def transform(self, X):
        """Relaxed leaf labelings for ``X``, shape ``(n_leaves, *dims)``."""
        return self._result_for(X).u

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_
