"""Continuous hierarchical max-flow segmentation with geodesic star-convexity shape complexes."""
from .energy import EnergyReport, brute_force, compare, energy, hard_labeling, labeling_energy
from .estimator import ShapeComplexSegmenter
from .exceptions import *  # noqa: F401,F403
from .fields import GridShape, divergence, gradient, project_ball, read_fld, write_fld
from .hierarchy import LabelHierarchy, bottom_up_order, build_hierarchy, top_down_order
from .phantoms import Phantom, synth
from .problem import Problem, SolverConfig, load_problem, make_problem, save_problem
from .solver_al import run
from .solver_pf import pf_run
from .star import DirectionSpec, check_star_convex, geodesic_star_field, simple_star_field

__version__ = "0.1.0"
