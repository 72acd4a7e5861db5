"""The federated round loop for both algorithms.

Each round: broadcast the global parameters, let every client compute its
update (one mini-batch gradient for fedsgd, the parameter delta of
``local_steps`` SGD steps for fedavg), replace the first M uploads by the
attack's forgeries, aggregate, and apply the aggregate to the global model
(w <- w - eta * agg for fedsgd, w <- w + agg for fedavg). All K clients
participate every round.

Every random draw comes from a generator derived from (seed, domain,
client, round), so runs are bit-reproducible and a client's computation
never depends on what other clients or the attacker do in the same round.
"""

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np

from . import attacks, data, metrics
from .aggregators import AggregatorSpec, AggregatorState, aggregate
from .attacks import AttackContext
from .core import AttackSpec, RoundRecord, check_finite
from .models import Batch, LogisticModel, MlpModel, evaluate

if TYPE_CHECKING:
    from .config import ExperimentConfig

ALGORITHMS = ("fedsgd", "fedavg")

_DOMAIN_INIT = 0
_DOMAIN_CLIENT = 1
_DOMAIN_ATTACK = 2
_DOMAIN_PARTITION = 3
_DOMAIN_DATA = 4


def derived_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed,) + key))


def init_rng(seed: int) -> np.random.Generator:
    return derived_rng(seed, _DOMAIN_INIT)


def client_rng(seed: int, client_id: int, round_idx: int) -> np.random.Generator:
    return derived_rng(seed, _DOMAIN_CLIENT, client_id, round_idx)


def attack_rng(seed: int, round_idx: int) -> np.random.Generator:
    return derived_rng(seed, _DOMAIN_ATTACK, round_idx)


def partition_rng(seed: int) -> np.random.Generator:
    return derived_rng(seed, _DOMAIN_PARTITION)


def data_rng(seed: int) -> np.random.Generator:
    return derived_rng(seed, _DOMAIN_DATA)


@dataclass(frozen=True)
class Schedule:
    """Step-wise learning rate: the rate of the first breakpoint whose
    threshold covers the round, the last rate beyond all thresholds."""

    breakpoints: tuple

    def __post_init__(self):
        points = tuple((float(t), float(r)) for t, r in self.breakpoints)
        if not points:
            raise ValueError("schedule needs at least one (threshold, rate) pair")
        thresholds = [t for t, _ in points]
        if sorted(thresholds) != thresholds or len(set(thresholds)) != len(thresholds):
            raise ValueError("schedule thresholds must be strictly increasing")
        if any(r <= 0 for _, r in points):
            raise ValueError("schedule rates must be positive")
        object.__setattr__(self, "breakpoints", points)


def lr_at(schedule: Schedule, round_idx: int) -> float:
    if round_idx < 0:
        raise ValueError("round index must be >= 0")
    for threshold, rate in schedule.breakpoints:
        if round_idx <= threshold:
            return rate
    return schedule.breakpoints[-1][1]


FEDSGD_SCHEDULE = Schedule(((2000, 0.1), (5000, 0.05), (math.inf, 0.025)))
FEDAVG_SCHEDULE = Schedule(((200, 0.1), (500, 0.05), (math.inf, 0.025)))


@dataclass(frozen=True)
class FederationConfig:
    """Loop parameters shared by both algorithms."""

    algorithm: str
    num_clients: int
    num_byzantine: int
    rounds: int
    batch_size: int
    schedule: Schedule
    seed: int
    local_steps: int = 1
    eval_interval: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm '{self.algorithm}'")
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if not 0 <= 2 * self.num_byzantine < self.num_clients:
            raise ValueError(
                "the majority of the clients must be benign "
                f"(num_byzantine={self.num_byzantine}, num_clients={self.num_clients})"
            )
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.local_steps < 1:
            raise ValueError("local_steps must be >= 1")
        if self.eval_interval < 1:
            raise ValueError("eval_interval must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


def _epoch_batches(rng: np.random.Generator, n_samples: int, batch_size: int,
                   steps: int):
    """Yield ``steps`` batches of indices, sampled without replacement
    within an epoch and reshuffled per epoch; a ragged tail smaller than
    the batch size triggers the reshuffle early."""
    size = min(batch_size, n_samples)
    order = rng.permutation(n_samples)
    pos = 0
    for _ in range(steps):
        if pos + size > n_samples:
            order = rng.permutation(n_samples)
            pos = 0
        yield order[pos:pos + size]
        pos += size


def fedsgd_update(model, w, inputs, labels, batch_size, rng,
                  sign_flip: bool = False) -> np.ndarray:
    """One client's fedsgd upload: the gradient of a single mini-batch
    (negated under the sign-flipping attack)."""
    if len(labels) == 0:
        raise ValueError("client shard is empty")
    idx = next(_epoch_batches(rng, len(labels), batch_size, 1))
    _, grad = model.loss_grad(w, Batch(inputs[idx], labels[idx]))
    return -grad if sign_flip else grad


def local_sgd(model, w0, inputs, labels, steps, batch_size, eta, rng,
              sign_flip: bool = False) -> np.ndarray:
    """One client's fedavg upload: the parameter delta after ``steps``
    mini-batch SGD steps from w0 (each step ascends under sign flipping)."""
    if len(labels) == 0:
        raise ValueError("client shard is empty")
    direction = 1.0 if sign_flip else -1.0
    w = w0.copy()
    for idx in _epoch_batches(rng, len(labels), batch_size, steps):
        _, grad = model.loss_grad(w, Batch(inputs[idx], labels[idx]))
        w += direction * eta * grad
    return w - w0


_SUBSTITUTION_ATTACKS = ("noise", "alie", "ipm", "adaptive_clipped")


class FederatedSimulation:
    """Owns the global model, client shards and server state for one run."""

    def __init__(self, model, train: data.Dataset, test: data.Dataset,
                 partition: data.Partition, fed_config: FederationConfig,
                 aggregator_spec: AggregatorSpec,
                 attack_spec: Optional[AttackSpec] = None,
                 capture_rounds=()):
        self.model = model
        self.config = fed_config
        self.aggregator_spec = aggregator_spec
        self.attack_spec = attack_spec or AttackSpec("none")
        self.capture_rounds = frozenset(int(t) for t in capture_rounds)
        self.test_batch = Batch(test.inputs, test.labels)

        if set(partition.shards) != set(range(fed_config.num_clients)):
            raise ValueError("partition must cover exactly clients 0..K-1")
        self.shards = []
        for k in range(fed_config.num_clients):
            idx = np.asarray(partition.shards[k])
            if len(idx) == 0:
                raise ValueError(
                    f"client {k} received an empty shard; use a different "
                    "partition seed or a larger dataset"
                )
            labels = train.labels[idx]
            if self.attack_spec.kind == "label_flip" and k < fed_config.num_byzantine:
                labels = np.array([
                    attacks.label_flip_transform(int(l), train.num_classes)
                    for l in labels
                ], dtype=np.int64)
            self.shards.append((train.inputs[idx], labels))

        self.w = model.init_params(init_rng(fed_config.seed))
        self.aggregator_state = AggregatorState()
        # the attacker's mirror of the norms the server has received so far
        self._observed_norms = np.array([], dtype=np.float64)

    def _client_update(self, k: int, round_idx: int, eta: float) -> np.ndarray:
        cfg = self.config
        rng = client_rng(cfg.seed, k, round_idx)
        flip = self.attack_spec.kind == "sign_flip" and k < cfg.num_byzantine
        inputs, labels = self.shards[k]
        if cfg.algorithm == "fedsgd":
            return fedsgd_update(self.model, self.w, inputs, labels,
                                 cfg.batch_size, rng, sign_flip=flip)
        return local_sgd(self.model, self.w, inputs, labels, cfg.local_steps,
                         cfg.batch_size, eta, rng, sign_flip=flip)

    def _forge_uploads(self, honest, round_idx: int):
        cfg = self.config
        spec = self.attack_spec
        benign = honest[cfg.num_byzantine:]
        server_tau = None
        if spec.kind == "adaptive_clipped":
            # Same rule as the server's adaptive threshold, over the norms
            # the attacker can know: everything the server received in past
            # rounds plus the current benign norms.
            known = np.concatenate([
                self._observed_norms,
                [np.linalg.norm(u) for u in benign],
            ])
            server_tau = float(np.median(known))
        linkage = self.aggregator_spec.linkage or "average"
        ctx = AttackContext(
            benign_updates=tuple(benign),
            own_updates=tuple(honest[:cfg.num_byzantine]),
            num_clients=cfg.num_clients,
            num_byzantine=cfg.num_byzantine,
            server_tau=server_tau,
            server_linkage=linkage,
        )
        if spec.kind == "noise":
            return attacks.noise_attack(ctx, attack_rng(cfg.seed, round_idx),
                                        spec.noise_mean, spec.noise_var)
        if spec.kind == "alie":
            return attacks.alie_attack(ctx, spec.z_max)
        if spec.kind == "ipm":
            return attacks.ipm_attack(ctx, spec.epsilon)
        return attacks.adaptive_attack(ctx, spec.eps_margin)

    def run_round(self, round_idx: int, evaluate_now: bool = True) -> RoundRecord:
        cfg = self.config
        eta = lr_at(cfg.schedule, round_idx)
        honest = [self._client_update(k, round_idx, eta)
                  for k in range(cfg.num_clients)]
        uploads = list(honest)
        if cfg.num_byzantine > 0 and self.attack_spec.kind in _SUBSTITUTION_ATTACKS:
            uploads[:cfg.num_byzantine] = self._forge_uploads(honest, round_idx)

        mat = np.stack(uploads)
        check_finite(mat, "round updates")
        norms = np.linalg.norm(mat, axis=1)

        agg = aggregate(mat, self.aggregator_spec, self.aggregator_state)
        self.aggregator_state.previous_aggregate = agg
        self._observed_norms = np.concatenate([self._observed_norms, norms])

        if cfg.algorithm == "fedsgd":
            self.w = self.w - eta * agg
        else:
            self.w = self.w + agg

        accuracy = loss = None
        if evaluate_now:
            accuracy, loss = evaluate(self.model, self.w, self.test_batch)
            loss = metrics.clamp_loss(loss)
        captured = None
        if round_idx in self.capture_rounds:
            captured = {k: uploads[k].copy() for k in range(cfg.num_clients)}
        return RoundRecord(round=round_idx, update_norms=norms, aggregate=agg,
                           test_accuracy=accuracy, test_loss=loss,
                           updates=captured)

    def rounds(self):
        """Yield one RoundRecord per round; evaluation runs every
        eval_interval rounds and always on the last round."""
        cfg = self.config
        for t in range(cfg.rounds):
            due = ((t + 1) % cfg.eval_interval == 0) or t == cfg.rounds - 1
            yield self.run_round(t, evaluate_now=due)

    def run(self):
        return list(self.rounds())


def _build_dataset(experiment: "ExperimentConfig"):
    spec = experiment.dataset
    if spec.name == "mnist":
        return data.load_mnist(spec.dir)
    blobs = data.synthetic_blobs(spec.classes, spec.per_class, spec.dim,
                                 spec.separation, data_rng(experiment.seed))
    # deterministic stratified 80/20 split into train and held-out test
    rng = derived_rng(experiment.seed, _DOMAIN_DATA, 1)
    order = rng.permutation(len(blobs))
    n_test = max(1, len(blobs) // 5)
    test_idx, train_idx = order[:n_test], order[n_test:]
    train = data.Dataset(blobs.inputs[train_idx], blobs.labels[train_idx],
                         blobs.num_classes)
    test = data.Dataset(blobs.inputs[test_idx], blobs.labels[test_idx],
                        blobs.num_classes)
    return train, test


def build_simulation(experiment: "ExperimentConfig") -> FederatedSimulation:
    """Assemble model, data, partition and server state from a config."""
    train, test = _build_dataset(experiment)
    if experiment.partition.kind == "iid":
        partition = data.iid_partition(len(train), experiment.num_clients,
                                       partition_rng(experiment.seed))
    else:
        partition = data.dirichlet_partition(train.labels, experiment.num_clients,
                                             experiment.partition.alpha,
                                             partition_rng(experiment.seed))
    input_dim = train.inputs.shape[1]
    if experiment.model.kind == "mlp":
        model = MlpModel(input_dim, experiment.model.hidden, train.num_classes)
    else:
        model = LogisticModel(input_dim, train.num_classes)
    return FederatedSimulation(
        model, train, test, partition, experiment.federation_config(),
        experiment.aggregator, experiment.attack,
        capture_rounds=experiment.capture_rounds,
    )


def run_experiment(experiment: "ExperimentConfig"):
    """Run a full configured experiment and return its round records."""
    return build_simulation(experiment).run()
