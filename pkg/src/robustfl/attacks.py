"""Byzantine attack strategies.

Each attack maps what the attacker knows (in the omniscient threat model:
every honestly computed update of the round, plus server internals for the
adaptive attack) to the M updates the malicious clients submit instead of
their honest ones.

Two of the six strategies are not substitution rules and are enacted at
training time by the federation loop instead: sign_flip negates the
gradient of every (local) step of a Byzantine client, and label_flip
rewrites the labels of a Byzantine client's shard once at setup via
:func:`label_flip_transform`.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .aggregators import cluster_two_groups, largest_cluster
from .core import as_update


@dataclass(frozen=True)
class AttackContext:
    """What the attacker can see when forging the round's malicious updates.

    ``benign_updates`` are the honest updates of clients M..K-1.
    ``own_updates`` are the updates clients 0..M-1 would have uploaded had
    they been honest (the noise attack perturbs exactly these).
    ``server_tau`` / ``server_linkage`` mirror the server's adaptive clip
    threshold and clustering linkage; only the adaptive attack reads them.
    """

    benign_updates: Sequence[np.ndarray]
    own_updates: Sequence[np.ndarray]
    num_clients: int
    num_byzantine: int
    server_tau: Optional[float] = None
    server_linkage: str = "average"

    def __post_init__(self):
        if not 0 <= 2 * self.num_byzantine < self.num_clients:
            raise ValueError(
                "the majority of the clients must be benign "
                f"(M={self.num_byzantine}, K={self.num_clients})"
            )
        if len(self.benign_updates) != self.num_clients - self.num_byzantine:
            raise ValueError("benign_updates must hold the K - M honest updates")
        if len(self.own_updates) != self.num_byzantine:
            raise ValueError("own_updates must hold the M would-be updates")


def noise_attack(ctx: AttackContext, rng: np.random.Generator,
                 noise_mean: float = 0.1, noise_var: float = 0.1):
    """Add i.i.d. Gaussian noise to each malicious client's own update.

    Per coordinate the noise has the given mean and variance (both 0.1 by
    default).
    """
    std = math.sqrt(noise_var)
    return [
        as_update(u) + rng.normal(noise_mean, std, size=len(u))
        for u in ctx.own_updates
    ]


def alie_attack(ctx: AttackContext, z_max: float = 1.0):
    """Hide inside the empirical spread of the benign updates.

    Per coordinate, all M malicious updates equal mu - z_max * sigma where
    mu and sigma are the mean and population standard deviation over the
    benign updates: the deterministic extreme of the plausible band.
    """
    benign = np.stack([as_update(u) for u in ctx.benign_updates])
    forged = benign.mean(axis=0) - z_max * benign.std(axis=0)
    return [forged.copy() for _ in range(ctx.num_byzantine)]


def ipm_attack(ctx: AttackContext, epsilon: float):
    """Submit -(epsilon / (K - M)) times the sum of the benign updates.

    For epsilon < K/M - 1 the mean over all K updates keeps the benign
    direction with shrunken magnitude; beyond that bound its sign flips.
    """
    if epsilon < 0:
        raise ValueError("ipm epsilon must be >= 0")
    benign_sum = np.sum(np.stack([as_update(u) for u in ctx.benign_updates]), axis=0)
    forged = -(epsilon / (ctx.num_clients - ctx.num_byzantine)) * benign_sum
    return [forged.copy() for _ in range(ctx.num_byzantine)]


def label_flip_transform(label: int, num_classes: int) -> int:
    """Map label l to num_classes - l - 1 (an involution)."""
    if not 0 <= label < num_classes:
        raise ValueError(f"label {label} out of range [0, {num_classes})")
    return num_classes - label - 1


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def _orthonormal_to(e: np.ndarray) -> np.ndarray:
    """A deterministic unit vector orthogonal to e."""
    basis = np.zeros_like(e)
    basis[int(np.argmin(np.abs(e)))] = 1.0
    u = basis - np.dot(basis, e) * e
    return _unit(u)


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    return mat / safe[:, None]


def direction_center(updates, group) -> np.ndarray:
    """Unit center of a cluster in direction space: the normalized mean of
    its members' unit vectors."""
    mat = np.stack([as_update(u) for u in updates])
    return _unit(_unit_rows(mat)[list(group)].mean(axis=0))


def cross_cluster_similarity(benign, linkage: str = "average"):
    """Similarity bound between the two benign clusters, measured against
    the larger cluster's direction center e'.

    delta is the cosine similarity between e' and the other cluster's
    members, averaged for average linkage and minimized for complete
    linkage. Measured this way the bound is exact for average linkage:
    the mean pairwise cosine between two clusters factorizes through the
    means of their unit vectors, so any direction with <e1, e'> > delta
    sits strictly closer to the large cluster than the two benign clusters
    sit to each other. (Averaging raw cross pairs instead would undershoot
    by the large cluster's internal spread and void that guarantee.)

    Returns (delta, major_group, minor_group).
    """
    mat = np.stack([as_update(u) for u in benign])
    group_a, group_b = cluster_two_groups(mat, linkage)
    major = largest_cluster(mat, linkage)
    minor = group_b if major == group_a else group_a
    center = direction_center(mat, major)
    sims = _unit_rows(mat)[minor] @ center
    delta = float(sims.mean()) if linkage == "average" else float(sims.min())
    return delta, major, minor


def malicious_direction(e: np.ndarray, e_prime: np.ndarray,
                        theta_prime: float) -> np.ndarray:
    """Unit vector at angle theta' from e_prime and theta + theta' from e.

    With theta the angle between the unit vectors e and e_prime, the result
    is e rotated by theta + theta' within their common plane:

        e1 = (cos(theta + theta') - sin(theta + theta') / tan(theta)) e
           + (cos(theta') + sin(theta') / tan(theta)) e'

    When e and e_prime are (anti)parallel they no longer span a plane, so
    the rotation happens away from e inside an arbitrary plane containing
    it.
    """
    cos_theta = float(np.clip(np.dot(e, e_prime), -1.0, 1.0))
    theta = math.acos(cos_theta)
    sin_theta = math.sin(theta)
    if sin_theta < 1e-9:
        u = _orthonormal_to(e)
        return math.cos(theta_prime) * e + math.sin(theta_prime) * u
    coef_e = (math.cos(theta + theta_prime)
              - math.sin(theta + theta_prime) / math.tan(theta))
    coef_ep = math.cos(theta_prime) + math.sin(theta_prime) / math.tan(theta)
    return coef_e * e + coef_ep * e_prime


def adaptive_attack(ctx: AttackContext, eps_margin: float = 1e-3):
    """Forge updates that join the largest cluster while turning away from
    the true descent direction.

    The attacker re-runs the server's clustering on the benign updates
    only, takes delta = the cross-cluster cosine similarity as the bound it
    must stay above, and rotates the unit benign mean e by theta + theta'
    in the plane spanned by e and the unit center e' of the largest benign
    cluster, where theta = angle(e, e') and theta' = arccos(delta) minus a
    small margin. The result e1 satisfies <e1, e'> = cos(theta') > delta
    (kept inside the big cluster) and <e1, e> = cos(theta + theta') (as far
    from e as the constraint allows). All M malicious updates are the same
    vector, scaled to the server's clip threshold tau.
    """
    if ctx.server_tau is None:
        raise ValueError("adaptive attack requires ctx.server_tau")
    if eps_margin < 0:
        raise ValueError("eps_margin must be >= 0")
    benign = np.stack([as_update(u) for u in ctx.benign_updates])
    delta, major, _ = cross_cluster_similarity(benign, ctx.server_linkage)
    e = _unit(benign.mean(axis=0))
    e_prime = direction_center(benign, major)
    theta_p = max(math.acos(max(min(delta, 1.0), -1.0)) - eps_margin, 0.0)
    e1 = malicious_direction(e, e_prime, theta_p)
    forged = ctx.server_tau * e1
    return [forged.copy() for _ in range(ctx.num_byzantine)]
