"""Dense tensor primitives: Lp norms, elementwise sign, scaled addition.

All functions are pure and operate on numpy arrays of any shape; the
flat row-major buffer is the canonical layout.
"""

import numpy as np

from .validation import check_norm_type, check_same_shape, check_tensor


def lp_norm(t, p):
    """Lp norm of the flattened tensor, p in {1, 2, inf}.

    Accumulation happens in float64 regardless of the input dtype.
    """
    p = check_norm_type(p)
    a = check_tensor(t, "t").ravel()
    if p == 1:
        return float(np.sum(np.abs(a)))
    if p == 2:
        return float(np.sqrt(np.sum(a * a)))
    return float(np.max(np.abs(a)))


def sign(t):
    """Elementwise sign with sign(0) == 0."""
    return np.sign(check_tensor(t, "t", allow_empty=True))


def axpy(a, x, y):
    """Return a * x + y elementwise; x and y must share a shape."""
    x = check_tensor(x, "x", allow_empty=True)
    y = check_tensor(y, "y", allow_empty=True)
    check_same_shape(x, y)
    return float(a) * x + y
