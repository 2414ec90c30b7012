"""Input validation helpers shared by the estimator classes."""

from __future__ import annotations

import numpy as np

from .errors import EmptyTensorError, NotFittedError


def check_dense_matrix(x, dim=None, name="x"):
    """Coerce to a 2-d float32 C-contiguous matrix of finite values."""
    x = np.ascontiguousarray(x, dtype=np.float32)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {x.shape}")
    if x.shape[1] == 0:
        raise ValueError(f"{name} has zero dimensionality")
    if dim is not None and x.shape[1] != dim:
        raise ValueError(f"{name} has dim {x.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_dense_vector(x, dim=None, name="query"):
    x = check_dense_matrix(x, dim=dim, name=name)
    if x.shape[0] != 1:
        raise ValueError(f"{name} must be a single vector, got {x.shape[0]} rows")
    return x[0]


def check_token_tensor(rows, ordinal=None, dim=None, name="tensor"):
    """Validate one document's token-embedding matrix (n_tokens x dim)."""
    rows = np.ascontiguousarray(rows, dtype=np.float32)
    if rows.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {rows.shape}")
    if rows.shape[0] == 0:
        raise EmptyTensorError(ordinal if ordinal is not None else -1)
    if dim is not None and rows.shape[1] != dim:
        raise ValueError(f"{name} has dim {rows.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(rows)):
        raise ValueError(f"{name} contains non-finite values")
    return rows


def check_top_k(k):
    k = int(k)
    if k < 1:
        raise ValueError(f"top-k must be >= 1, got {k}")
    return k


def check_fitted(estimator, attrs):
    """Raise NotFittedError unless every trailing-underscore attr is set."""
    if isinstance(attrs, str):
        attrs = (attrs,)
    for attr in attrs:
        if getattr(estimator, attr, None) is None:
            raise NotFittedError(
                f"{type(estimator).__name__} is not fitted; call fit() first"
            )
