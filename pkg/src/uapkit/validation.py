"""Input validation helpers used by the estimators and functional API."""

import numpy as np

NORM_TYPES = (1, 2, np.inf)


def check_norm_type(p):
    """Normalize a norm-type argument to one of 1, 2, np.inf.

    Accepts the integers 1 and 2, ``np.inf``/``float('inf')`` and the
    strings ``"1"``, ``"2"``, ``"inf"``.
    """
    if isinstance(p, str):
        if p == "inf":
            return np.inf
        if p in ("1", "2"):
            return int(p)
        raise ValueError(f"norm type must be 1, 2 or 'inf', got {p!r}")
    if p in (1, 2):
        return int(p)
    if p == np.inf:
        return np.inf
    raise ValueError(f"norm type must be 1, 2 or inf, got {p!r}")


def norm_type_str(p):
    """Canonical textual form of a norm type ('1', '2' or 'inf')."""
    p = check_norm_type(p)
    return "inf" if p == np.inf else str(p)


def check_tensor(t, name="tensor", allow_empty=False):
    """Coerce to a float64 array and verify finiteness."""
    a = np.asarray(t, dtype=np.float64)
    if not allow_empty and a.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or Inf")
    return a


def check_same_shape(x, y, names=("x", "y")):
    if x.shape != y.shape:
        raise ValueError(
            f"shape mismatch: {names[0]} has shape {x.shape}, "
            f"{names[1]} has shape {y.shape}"
        )


def check_image_batch(X, input_shape=None, name="X"):
    """Validate a batch of images shaped (n, H, W, C).

    A single image of shape ``input_shape`` is promoted to a batch of one.
    """
    X = check_tensor(X, name)
    if input_shape is not None and X.shape == tuple(input_shape):
        X = X[np.newaxis]
    if X.ndim != 4:
        raise ValueError(f"{name} must have shape (n, H, W, C), got {X.shape}")
    if input_shape is not None and X.shape[1:] != tuple(input_shape):
        raise ValueError(
            f"{name} images have shape {X.shape[1:]}, "
            f"classifier expects {tuple(input_shape)}"
        )
    return X


def check_labels(y, n_classes, name="y"):
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.issubdtype(y.dtype, np.integer):
        yi = y.astype(np.int64)
        if not np.array_equal(yi, y):
            raise ValueError(f"{name} must contain integer class ids")
        y = yi
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError(
            f"{name} contains class ids outside [0, {n_classes})"
        )
    return y.astype(np.int64)
