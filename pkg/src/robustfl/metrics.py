"""Round-level analyses: pairwise update similarity and run summaries."""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


def pairwise_cosine(updates) -> np.ndarray:
    """K x K matrix of pairwise cosine similarities.

    Zero-norm updates get 0 off-diagonal; the diagonal is 1.
    """
    mat = np.stack([np.asarray(u, dtype=np.float64) for u in updates])
    if mat.shape[0] < 2:
        raise ValueError("need at least two updates")
    norms = np.linalg.norm(mat, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    unit = mat / safe[:, None]
    sim = unit @ unit.T
    np.clip(sim, -1.0, 1.0, out=sim)
    np.fill_diagonal(sim, 1.0)
    return sim


def mean_offdiagonal(matrix: np.ndarray) -> float:
    """Average of the off-diagonal entries of a square matrix."""
    matrix = np.asarray(matrix)
    k = matrix.shape[0]
    return float((matrix.sum() - np.trace(matrix)) / (k * (k - 1)))


LOSS_CEILING = 1e5


def clamp_loss(loss: float) -> float:
    """Clamp into [0, 1e5]; NaN maps to the ceiling as a divergence sentinel."""
    loss = float(loss)
    if math.isnan(loss):
        return LOSS_CEILING
    return min(max(loss, 0.0), LOSS_CEILING)


@dataclass(frozen=True)
class Summary:
    rounds: int
    final_accuracy: float
    best_accuracy: float
    final_loss: float
    mean_similarity: Optional[float] = None


def summarize(records) -> Summary:
    """Final and best accuracy over the evaluated rounds, plus the mean
    off-diagonal cosine similarity over rounds whose updates were captured."""
    if not records:
        raise ValueError("cannot summarize an empty record list")
    evaluated = [r for r in records if r.test_accuracy is not None]
    if not evaluated:
        raise ValueError("no evaluated rounds to summarize")
    similarity = None
    captured = [r for r in records if r.updates is not None]
    if captured:
        values = [
            mean_offdiagonal(pairwise_cosine(list(r.updates.values())))
            for r in captured
        ]
        similarity = float(np.mean(values))
    return Summary(
        rounds=len(records),
        final_accuracy=evaluated[-1].test_accuracy,
        best_accuracy=max(r.test_accuracy for r in evaluated),
        final_loss=evaluated[-1].test_loss,
        mean_similarity=similarity,
    )
