"""Sparsemax kernels: compiled extension when available, numpy fallback otherwise.

The two implementations are numerically interchangeable; the active backend is
chosen at import (env var ``CONTAB_PURE_PYTHON=1`` forces the numpy path) and
can be switched with :func:`set_backend` for tests and benchmarks.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from contab import _sparsemax as _compiled
except ImportError:
    _compiled = None


def sparsemax_forward_np(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise Euclidean projection onto the simplex; returns (out, support)."""
    z = np.ascontiguousarray(z, dtype=np.float64)
    n, m = z.shape
    srt = -np.sort(-z, axis=1)
    cum = np.cumsum(srt, axis=1)
    ks = np.arange(1, m + 1, dtype=np.float64)
    # the set satisfying 1 + k*z_(k) > cumsum_k is a prefix, so its size is K
    support = (1.0 + ks * srt > cum).sum(axis=1)
    tau = (cum[np.arange(n), support - 1] - 1.0) / support
    out = np.maximum(z - tau[:, None], 0.0)
    return out, support.astype(np.int64)


def sparsemax_backward_np(out: np.ndarray, grad: np.ndarray) -> np.ndarray:
    support = out > 0.0
    cnt = support.sum(axis=1)
    # add.accumulate is strictly sequential (adding exact zeros is a bitwise
    # no-op), so this matches the compiled kernel's sum bit for bit; np.sum's
    # pairwise summation would diverge in the last bit
    masked = np.where(support, grad, 0.0)
    total = np.add.accumulate(masked, axis=1)[:, -1]
    mean = np.divide(total, cnt, out=np.zeros_like(total), where=cnt > 0)
    return np.where(support, grad - mean[:, None], 0.0)


_BACKENDS = {"numpy": (sparsemax_forward_np, sparsemax_backward_np)}
if _compiled is not None:
    _BACKENDS["compiled"] = (_compiled.sparsemax_forward, _compiled.sparsemax_backward)

if os.environ.get("CONTAB_PURE_PYTHON", "") not in ("", "0"):
    _active = "numpy"
else:
    _active = "compiled" if _compiled is not None else "numpy"


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; have {available_backends()}")
    _active = name


def sparsemax_forward(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if z.ndim != 2 or z.shape[1] == 0:
        raise ValueError("sparsemax requires a 2-D input with at least one column")
    z = np.ascontiguousarray(z, dtype=np.float64)
    return _BACKENDS[_active][0](z)


def sparsemax_backward(out: np.ndarray, grad: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(out, dtype=np.float64)
    grad = np.ascontiguousarray(grad, dtype=np.float64)
    return _BACKENDS[_active][1](out, grad)
