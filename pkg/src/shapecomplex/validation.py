"""Input checks shared by the estimator and the command line."""
import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import NonFiniteField, ShapeMismatch


def check_image(X, name="X"):
    """A finite 2-D or 3-D float array."""
    try:
        X = check_array(X, dtype=float, ensure_2d=False, allow_nd=True,
                        ensure_all_finite=True, input_name=name)
    except ValueError as exc:
        if "NaN" in str(exc) or "infinity" in str(exc):
            raise NonFiniteField(str(exc)) from None
        raise
    if X.ndim not in (2, 3):
        raise ShapeMismatch(f"{name} must be 2-D or 3-D, got {X.ndim}-D")
    return X


def check_costs(X, n_leaves, name="X"):
    """Stacked per-leaf cost rasters of shape ``(n_leaves, *dims)``."""
    X = check_array(X, dtype=float, ensure_2d=False, allow_nd=True,
                    ensure_all_finite=True, input_name=name)
    if X.ndim not in (3, 4) or X.shape[0] != n_leaves:
        raise ShapeMismatch(f"{name} must have shape (n_leaves={n_leaves}, *dims), got {X.shape}")
    return X


def check_positive(value, name, allow_zero=False):
    if not isinstance(value, numbers.Real) or isinstance(value, bool) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite number, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise ValueError(f"{name} must be {'>=' if allow_zero else '>'} 0, got {value!r}")
    return float(value)


def check_spacing(spacing, ndim):
    if spacing is None:
        return (1.0,) * ndim
    spacing = tuple(float(s) for s in np.atleast_1d(spacing))
    if len(spacing) == 1:
        spacing = spacing * ndim
    if len(spacing) != ndim:
        raise ShapeMismatch(f"spacing has {len(spacing)} entries for a {ndim}-D grid")
    for s in spacing:
        check_positive(s, "spacing")
    return spacing
