"""Named random substreams derived from one root seed.

Every stochastic component draws from ``substream(seed, label)`` so adding or
removing one component never shifts the stream another one sees.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_words(label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def substream(seed: int, label: str) -> np.random.Generator:
    """Generator for the (seed, label) stream, stable across processes."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([seed, *_label_words(label)]))


def derive_seed(seed: int, label: str) -> int:
    """Integer sub-seed for components that take a plain seed."""
    return int(substream(seed, label).integers(0, 2**63 - 1))
