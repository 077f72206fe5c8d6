"""Categorical distributions over the entity set, shared by all predictors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class EntityDistribution:
    """Dense probability vector over all entities.

    ``source`` tags provenance (weighted / unweighted / lm / reference /
    uniform); ``temperature`` is set for the softmax-rescaled aggregation
    distributions and None otherwise.
    """

    probs: np.ndarray
    source: str
    temperature: float | None = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)

    @property
    def entity_count(self) -> int:
        return self.probs.shape[0]

    def argmax(self) -> int:
        """Most probable entity; exact ties resolve to the smallest id."""
        return int(np.argmax(self.probs))


def stable_softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax in float64; strictly positive, sums to 1."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()
