"""Shared vector operations and record types.

Client updates are plain 1-D float64 numpy arrays of a fixed dimension d;
every client in a run uses the same d. Clients are identified by integers
in [0, K), and in a run with M attackers the clients 0..M-1 are the
Byzantine ones by convention.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

ATTACK_KINDS = (
    "none",
    "noise",
    "alie",
    "ipm",
    "sign_flip",
    "label_flip",
    "adaptive_clipped",
)


def as_update(v) -> np.ndarray:
    """Coerce ``v`` to a 1-D float64 array (no copy when already one)."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"update must be a 1-D vector, got shape {arr.shape}")
    return arr


def check_finite(v, name: str = "update") -> None:
    """Reject NaN/Inf before a vector enters aggregation."""
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains NaN or Inf entries")


def l2_norm(v) -> float:
    """Euclidean norm of a vector."""
    return float(np.linalg.norm(np.asarray(v, dtype=np.float64)))


def cosine_distance(a, b) -> float:
    """1 - cos(a, b), in [0, 2].

    A zero-norm vector is defined to be at distance 1 from everything,
    which keeps the function symmetric and avoids division by zero.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        return 1.0
    return float(1.0 - np.dot(a, b) / (norm_a * norm_b))


@dataclass(frozen=True)
class AttackSpec:
    """Which attack the Byzantine clients run, plus its parameters.

    Parameters must be given only for the kinds that use them: ``epsilon``
    for ipm, ``z_max`` for alie, ``noise_mean``/``noise_var`` for noise and
    ``eps_margin`` (radians) for adaptive_clipped. Kinds with documented
    defaults fill them in automatically; ipm has no sane default magnitude
    and requires ``epsilon`` explicitly.
    """

    kind: str = "none"
    epsilon: Optional[float] = None
    z_max: Optional[float] = None
    noise_mean: Optional[float] = None
    noise_var: Optional[float] = None
    eps_margin: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(
                f"unknown attack kind '{self.kind}', expected one of {ATTACK_KINDS}"
            )
        allowed = {
            "ipm": ("epsilon",),
            "alie": ("z_max",),
            "noise": ("noise_mean", "noise_var"),
            "adaptive_clipped": ("eps_margin",),
        }.get(self.kind, ())
        for name in ("epsilon", "z_max", "noise_mean", "noise_var", "eps_margin"):
            if getattr(self, name) is not None and name not in allowed:
                raise ValueError(
                    f"attack '{self.kind}' does not take parameter '{name}'"
                )
        if self.kind == "ipm":
            if self.epsilon is None:
                raise ValueError("attack 'ipm' requires parameter 'epsilon'")
            if self.epsilon < 0:
                raise ValueError("attack parameter 'epsilon' must be >= 0")
        if self.kind == "alie" and self.z_max is None:
            object.__setattr__(self, "z_max", 1.0)
        if self.kind == "noise":
            if self.noise_mean is None:
                object.__setattr__(self, "noise_mean", 0.1)
            if self.noise_var is None:
                object.__setattr__(self, "noise_var", 0.1)
            if self.noise_var < 0:
                raise ValueError("attack parameter 'noise_var' must be >= 0")
        if self.kind == "adaptive_clipped" and self.eps_margin is None:
            object.__setattr__(self, "eps_margin", 1e-3)

    def label(self) -> str:
        """Short name used in sweep file names."""
        if self.kind == "ipm":
            return f"ipm_eps{self.epsilon:g}"
        if self.kind == "alie":
            return f"alie_z{self.z_max:g}"
        return self.kind


@dataclass
class RoundRecord:
    """Everything observed in one communication round.

    ``updates`` maps client id to the update the server received; it is
    only populated on explicitly captured rounds since keeping every
    update of every round is O(T * K * d) memory. ``test_accuracy`` and
    ``test_loss`` are None on rounds where evaluation was skipped; the
    loss is clamped to [0, 1e5] when present.
    """

    round: int
    update_norms: np.ndarray
    aggregate: np.ndarray
    test_accuracy: Optional[float] = None
    test_loss: Optional[float] = None
    updates: Optional[dict] = field(default=None, repr=False)

    def __post_init__(self):
        if self.round < 0:
            raise ValueError("round index must be >= 0")
        self.update_norms = np.asarray(self.update_norms, dtype=np.float64)
        self.aggregate = as_update(self.aggregate)
        if self.updates is not None:
            if len(self.updates) != len(self.update_norms):
                raise ValueError("captured updates must cover all clients")
            for vec in self.updates.values():
                if as_update(vec).shape != self.aggregate.shape:
                    raise ValueError("update dimension differs from aggregate")

    @property
    def aggregate_norm(self) -> float:
        return l2_norm(self.aggregate)
