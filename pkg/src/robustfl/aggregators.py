"""The nine server-side aggregation schemes.

Every scheme maps the K received updates of one round to a single update.
``mean`` is the non-robust baseline; krum, geomed, autogm, median and
trimmed_mean are classical robust estimators; centered_clipping keeps a
running center and clips deviations from it; clustering splits clients in
two groups by update direction and averages the larger one;
clipped_clustering additionally clips every update to an adaptive norm
threshold (the median of all update norms seen so far) before clustering.

Aggregators are pure functions of their inputs except for the two stateful
schemes, whose state (previous aggregate, norm history) lives in an
explicit :class:`AggregatorState` owned by the caller and mutated at most
once per round.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import as_update, check_finite

logger = logging.getLogger(__name__)

AGGREGATOR_KINDS = (
    "mean",
    "krum",
    "geomed",
    "autogm",
    "median",
    "trimmed_mean",
    "centered_clipping",
    "clustering",
    "clipped_clustering",
)

LINKAGES = ("average", "complete")


def _as_matrix(updates) -> np.ndarray:
    """Stack updates into a (K, d) float64 matrix, validating finiteness."""
    if isinstance(updates, np.ndarray) and updates.ndim == 2:
        mat = np.asarray(updates, dtype=np.float64)
    else:
        rows = [as_update(u) for u in updates]
        if not rows:
            raise ValueError("cannot aggregate an empty update set")
        mat = np.stack(rows)
    if mat.shape[0] < 1:
        raise ValueError("cannot aggregate an empty update set")
    check_finite(mat, "updates")
    return mat


def mean(updates) -> np.ndarray:
    """Coordinate-wise arithmetic mean.

    Each coordinate is summed in sorted value order so the result is
    bit-identical under permutation of the clients.
    """
    return np.sort(_as_matrix(updates), axis=0).mean(axis=0)


def krum(updates, num_byzantine: int) -> np.ndarray:
    """Return the update closest to its K - M - 2 nearest neighbours.

    Closeness is the sum of squared Euclidean distances to the
    K - M - 2 nearest other updates; ties go to the lowest client index.
    """
    mat = _as_matrix(updates)
    k = mat.shape[0]
    n_neighbors = k - num_byzantine - 2
    if num_byzantine < 0:
        raise ValueError("num_byzantine must be >= 0")
    if n_neighbors < 1:
        raise ValueError(
            f"krum needs K - M - 2 >= 1, got K={k}, M={num_byzantine}"
        )
    # row-difference arithmetic (not the Gram expansion): scores stay exactly
    # reproducible against a brute-force rescoring of the same matrix
    sq_dist = np.empty((k, k))
    for i in range(k):
        sq_dist[i] = np.sum((mat - mat[i]) ** 2, axis=1)
    np.fill_diagonal(sq_dist, np.inf)
    sq_dist.sort(axis=1)
    scores = sq_dist[:, :n_neighbors].sum(axis=1)
    return mat[int(np.argmin(scores))].copy()


def _geomed_objective(mat: np.ndarray, z: np.ndarray) -> float:
    return float(np.linalg.norm(mat - z, axis=1).sum())


def geomed(updates, tol: float = 1e-7, max_iters: int = 1000,
           smoothing: float = 1e-8) -> np.ndarray:
    """Geometric median: the point minimizing the sum of Euclidean distances.

    Computed by smoothed Weiszfeld iteration started at the coordinate-wise
    mean; the smoothing floor keeps the weights finite when the iterate
    lands on a data point. The returned point is never worse (in objective
    value) than the mean or any input point.
    """
    mat = _as_matrix(updates)
    if mat.shape[0] == 1:
        return mat[0].copy()
    start = mat.mean(axis=0)
    z = start
    converged = False
    for _ in range(max_iters):
        dist = np.linalg.norm(mat - z, axis=1)
        weights = 1.0 / np.maximum(dist, smoothing)
        z_new = (weights[:, None] * mat).sum(axis=0) / weights.sum()
        step = np.linalg.norm(z_new - z)
        z = z_new
        if step <= tol:
            converged = True
            break
    if not converged:
        logger.warning("geomed: no convergence after %d iterations", max_iters)
    candidates = np.vstack([z, start, mat])
    objectives = [_geomed_objective(mat, c) for c in candidates]
    return candidates[int(np.argmin(objectives))].copy()


def project_onto_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of v onto {x : x >= 0, sum(x) = 1}."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, len(v) + 1) > cumulative - 1.0)[0][-1]
    theta = (cumulative[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _weighted_geomed(mat, weights, start, tol, max_iters, smoothing):
    z = start
    for _ in range(max_iters):
        dist = np.linalg.norm(mat - z, axis=1)
        w = weights / np.maximum(dist, smoothing)
        total = w.sum()
        if total <= 0.0:
            return z
        z_new = (w[:, None] * mat).sum(axis=0) / total
        step = np.linalg.norm(z_new - z)
        z = z_new
        if step <= tol:
            break
    return z


def autogm(updates, lam: float, tol: float = 1e-7, max_iters: int = 1000,
           smoothing: float = 1e-8) -> np.ndarray:
    """Auto-weighted geometric median.

    Alternates two exact sub-steps: with the weights alpha fixed, move z to
    the alpha-weighted geometric median (weighted Weiszfeld); with z fixed
    and d_k = ||z - update_k||, alpha is the minimizer of
    sum(alpha_k d_k) + (lam / 2) ||alpha||^2 over the probability simplex,
    i.e. the Euclidean projection of -d / lam onto the simplex. Large lam
    forces near-uniform weights (recovering geomed); small lam concentrates
    the weight on the nearest updates.
    """
    if lam <= 0:
        raise ValueError("autogm requires lambda > 0")
    mat = _as_matrix(updates)
    k = mat.shape[0]
    if k == 1:
        return mat[0].copy()
    alpha = np.full(k, 1.0 / k)
    z = mat.mean(axis=0)
    converged = False
    for _ in range(max_iters):
        z_new = _weighted_geomed(mat, alpha, z, tol, max_iters, smoothing)
        dist = np.linalg.norm(mat - z_new, axis=1)
        alpha = project_onto_simplex(-dist / lam)
        step = np.linalg.norm(z_new - z)
        z = z_new
        if step <= tol:
            converged = True
            break
    if not converged:
        logger.warning("autogm: no convergence after %d iterations", max_iters)
    return z


def coordinate_median(updates) -> np.ndarray:
    """Per-coordinate median; even counts average the two middle values."""
    return np.median(_as_matrix(updates), axis=0)


def trimmed_mean(updates, beta: float) -> np.ndarray:
    """Per-coordinate mean after dropping the floor(beta*K) largest and
    smallest values of that coordinate."""
    if not 0.0 <= beta < 0.5:
        raise ValueError("trim fraction beta must be in [0, 0.5)")
    mat = _as_matrix(updates)
    k = mat.shape[0]
    cut = int(math.floor(beta * k))
    if cut == 0:
        return mat.mean(axis=0)
    if k - 2 * cut < 1:
        raise ValueError(f"trimming {cut} per side leaves no values (K={k})")
    ordered = np.sort(mat, axis=0)
    return ordered[cut:k - cut].mean(axis=0)


def centered_clipping(updates, center: Optional[np.ndarray],
                      tau: float = 10.0, iters: int = 1) -> np.ndarray:
    """Iteratively re-center on the mean of deviations clipped to radius tau.

    ``center`` is the previous round's aggregate (zero vector on the first
    round). Each inner iteration moves the center by at most tau.
    """
    if tau <= 0:
        raise ValueError("centered_clipping requires tau > 0")
    if iters < 1:
        raise ValueError("centered_clipping requires iters >= 1")
    mat = _as_matrix(updates)
    c = np.zeros(mat.shape[1]) if center is None else as_update(center).copy()
    for _ in range(iters):
        diff = mat - c
        norms = np.linalg.norm(diff, axis=1)
        # zero-norm deviations contribute zero regardless of the scale used
        safe = np.where(norms > 0.0, norms, 1.0)
        scale = np.minimum(1.0, tau / safe)
        c = c + (scale[:, None] * diff).mean(axis=0)
    return c


def _cosine_distance_matrix(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1)
    nonzero = norms > 0.0
    unit = np.zeros_like(mat)
    unit[nonzero] = mat[nonzero] / norms[nonzero, None]
    dist = 1.0 - unit @ unit.T
    # zero-norm updates sit at distance 1 from everything
    dist[~nonzero, :] = 1.0
    dist[:, ~nonzero] = 1.0
    np.maximum(dist, 0.0, out=dist)
    np.fill_diagonal(dist, 0.0)
    return dist


def _linkage_distance(dist, group_a, group_b, linkage):
    block = dist[np.ix_(group_a, group_b)]
    return float(block.mean()) if linkage == "average" else float(block.max())


def cluster_two_groups(updates, linkage: str = "average"):
    """Agglomerate updates on pairwise cosine distance down to two groups.

    Bottom-up merging; the distance between clusters is the average
    (or maximum, for complete linkage) of the pairwise cosine distances of
    their members. Ties merge the pair with the lowest member indices.
    Returns two sorted index lists, the one containing the lowest index
    first.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage '{linkage}', expected {LINKAGES}")
    mat = _as_matrix(updates)
    k = mat.shape[0]
    if k < 2:
        raise ValueError("clustering needs at least two updates")
    dist = _cosine_distance_matrix(mat)
    clusters = [[i] for i in range(k)]
    while len(clusters) > 2:
        best_key = None
        best_pair = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                d = _linkage_distance(dist, clusters[a], clusters[b], linkage)
                lo, hi = sorted((clusters[a][0], clusters[b][0]))
                key = (d, lo, hi)
                if best_key is None or key < best_key:
                    best_key = key
                    best_pair = (a, b)
        a, b = best_pair
        merged = sorted(clusters[a] + clusters[b])
        clusters = [c for i, c in enumerate(clusters) if i not in (a, b)]
        clusters.append(merged)
    clusters.sort(key=lambda c: c[0])
    return clusters[0], clusters[1]


def _intra_distance(dist, group):
    if len(group) < 2:
        return 0.0
    block = dist[np.ix_(group, group)]
    n = len(group)
    return float(block.sum() / (n * (n - 1)))


def largest_cluster(updates, linkage: str = "average"):
    """The winning group of :func:`cluster_two_groups`: the larger one, with
    size ties broken by tighter internal cohesion, then lower min index."""
    mat = _as_matrix(updates)
    group_a, group_b = cluster_two_groups(mat, linkage)
    if len(group_a) != len(group_b):
        return group_a if len(group_a) > len(group_b) else group_b
    dist = _cosine_distance_matrix(mat)
    intra_a = _intra_distance(dist, group_a)
    intra_b = _intra_distance(dist, group_b)
    if intra_a != intra_b:
        return group_a if intra_a < intra_b else group_b
    return group_a if group_a[0] < group_b[0] else group_b


def clustering_agg(updates, linkage: str = "average") -> np.ndarray:
    """Mean of the larger of the two direction-based groups."""
    mat = _as_matrix(updates)
    return mat[largest_cluster(mat, linkage)].mean(axis=0)


def clip_by_norm(v, tau: float) -> np.ndarray:
    """Rescale ``v`` so its norm does not exceed tau, keeping its direction.

    Vectors with norm <= tau (including the zero vector) pass unchanged.
    """
    if tau < 0:
        raise ValueError("clip threshold tau must be >= 0")
    v = as_update(v)
    norm = np.linalg.norm(v)
    if norm <= tau:
        return v.copy()
    return v * (tau / norm)


class NormHistory:
    """Append-only record of every update norm the server has observed."""

    __slots__ = ("_norms",)

    def __init__(self, norms=()):
        self._norms = []
        self.extend(norms)

    def append(self, value: float) -> None:
        value = float(value)
        if not np.isfinite(value) or value < 0.0:
            raise ValueError(f"norms must be finite and >= 0, got {value}")
        self._norms.append(value)

    def extend(self, values) -> None:
        for value in values:
            self.append(value)

    def as_array(self) -> np.ndarray:
        return np.asarray(self._norms, dtype=np.float64)

    def __len__(self) -> int:
        return len(self._norms)


def adaptive_tau(history: NormHistory) -> float:
    """Median of all norms recorded so far (the adaptive clip threshold)."""
    if len(history) == 0:
        raise ValueError("adaptive_tau needs a nonempty norm history")
    return float(np.median(history.as_array()))


@dataclass
class AggregatorState:
    """Cross-round server state: the previous aggregate (centered_clipping's
    starting center, zero before round 0) and the norm history backing
    clipped_clustering's adaptive threshold."""

    previous_aggregate: Optional[np.ndarray] = None
    norm_history: NormHistory = field(default_factory=NormHistory)


def clipped_clustering(updates, state: AggregatorState,
                       linkage: str = "average") -> np.ndarray:
    """Clustering aggregation over norm-clipped updates.

    The current round's raw norms (all clients, the server cannot tell
    roles apart) are appended to the history first, so the very first
    round is clipped by the median of its own norms. The output norm is
    bounded by the threshold.
    """
    mat = _as_matrix(updates)
    state.norm_history.extend(np.linalg.norm(mat, axis=1))
    tau = adaptive_tau(state.norm_history)
    clipped = np.stack([clip_by_norm(row, tau) for row in mat])
    return clustering_agg(clipped, linkage)


@dataclass(frozen=True)
class AggregatorSpec:
    """Declarative choice of scheme plus its parameters.

    Parameters may only be given for the kind that uses them:
    ``num_byzantine`` for krum, ``trim_fraction`` for trimmed_mean,
    ``cc_tau``/``cc_iters`` for centered_clipping (defaults 10.0 / 1),
    ``lam`` for autogm (default 1.0) and ``linkage`` for the clustering
    variants (default average).
    """

    kind: str
    num_byzantine: Optional[int] = None
    trim_fraction: Optional[float] = None
    cc_tau: Optional[float] = None
    cc_iters: Optional[int] = None
    lam: Optional[float] = None
    linkage: Optional[str] = None

    def __post_init__(self):
        if self.kind not in AGGREGATOR_KINDS:
            raise ValueError(
                f"unknown aggregator kind '{self.kind}', "
                f"expected one of {AGGREGATOR_KINDS}"
            )
        allowed = {
            "krum": ("num_byzantine",),
            "trimmed_mean": ("trim_fraction",),
            "centered_clipping": ("cc_tau", "cc_iters"),
            "autogm": ("lam",),
            "clustering": ("linkage",),
            "clipped_clustering": ("linkage",),
        }.get(self.kind, ())
        for name in ("num_byzantine", "trim_fraction", "cc_tau", "cc_iters",
                     "lam", "linkage"):
            if getattr(self, name) is not None and name not in allowed:
                raise ValueError(
                    f"aggregator '{self.kind}' does not take parameter '{name}'"
                )
        if self.kind == "krum" and self.num_byzantine is None:
            raise ValueError("aggregator 'krum' requires parameter 'num_byzantine'")
        if self.kind == "trimmed_mean":
            if self.trim_fraction is None:
                raise ValueError(
                    "aggregator 'trimmed_mean' requires parameter 'trim_fraction'"
                )
            if not 0.0 <= self.trim_fraction < 0.5:
                raise ValueError("'trim_fraction' must be in [0, 0.5)")
        if self.kind == "centered_clipping":
            if self.cc_tau is None:
                object.__setattr__(self, "cc_tau", 10.0)
            if self.cc_iters is None:
                object.__setattr__(self, "cc_iters", 1)
            if self.cc_tau <= 0:
                raise ValueError("'cc_tau' must be > 0")
            if self.cc_iters < 1:
                raise ValueError("'cc_iters' must be >= 1")
        if self.kind == "autogm":
            if self.lam is None:
                object.__setattr__(self, "lam", 1.0)
            if self.lam <= 0:
                raise ValueError("'lam' must be > 0")
        if self.kind in ("clustering", "clipped_clustering") and self.linkage is None:
            object.__setattr__(self, "linkage", "average")
        if self.linkage is not None and self.linkage not in LINKAGES:
            raise ValueError(f"'linkage' must be one of {LINKAGES}")

    def label(self) -> str:
        """Short name used in sweep file names."""
        return self.kind


def aggregate(updates, spec: AggregatorSpec, state: AggregatorState) -> np.ndarray:
    """Run the scheme selected by ``spec`` on one round of updates.

    Only clipped_clustering mutates ``state`` here (its history append);
    the caller refreshes ``state.previous_aggregate`` once per round.
    """
    if spec.kind == "mean":
        return mean(updates)
    if spec.kind == "krum":
        return krum(updates, spec.num_byzantine)
    if spec.kind == "geomed":
        return geomed(updates)
    if spec.kind == "autogm":
        return autogm(updates, spec.lam)
    if spec.kind == "median":
        return coordinate_median(updates)
    if spec.kind == "trimmed_mean":
        return trimmed_mean(updates, spec.trim_fraction)
    if spec.kind == "centered_clipping":
        return centered_clipping(updates, state.previous_aggregate,
                                 spec.cc_tau, spec.cc_iters)
    if spec.kind == "clustering":
        return clustering_agg(updates, spec.linkage)
    if spec.kind == "clipped_clustering":
        return clipped_clustering(updates, state, spec.linkage)
    raise ValueError(f"unknown aggregator kind '{spec.kind}'")
