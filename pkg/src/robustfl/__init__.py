"""Deterministic simulator for Byzantine-robust federated learning."""

from .aggregators import (
    AggregatorSpec,
    AggregatorState,
    NormHistory,
    adaptive_tau,
    aggregate,
    autogm,
    centered_clipping,
    clip_by_norm,
    clipped_clustering,
    cluster_two_groups,
    clustering_agg,
    coordinate_median,
    geomed,
    krum,
    mean,
    trimmed_mean,
)
from .attacks import (
    AttackContext,
    adaptive_attack,
    alie_attack,
    ipm_attack,
    label_flip_transform,
    noise_attack,
)
from .config import ExperimentConfig, parse_config, serialize_config
from .core import AttackSpec, RoundRecord, cosine_distance, l2_norm
from .data import (
    Dataset,
    Partition,
    dirichlet_partition,
    iid_partition,
    load_idx,
    load_mnist,
    synthetic_blobs,
)
from .federation import (
    FederatedSimulation,
    FederationConfig,
    Schedule,
    build_simulation,
    local_sgd,
    lr_at,
    run_experiment,
)
from .metrics import clamp_loss, pairwise_cosine, summarize
from .models import Batch, LogisticModel, MlpModel, evaluate

__version__ = "0.1.0"
