"""Experiment topologies and harness: centralized, IID federated, and
source-exclusive federated runs with deterministic seed bookkeeping, a
learning-rate grid, client sweeps, and CSV metrics export."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .data.corpus import (
    AugmentationPolicy,
    DatasetSource,
    augment,
    dataset_arrays,
    fingerprint,
    generate_synthetic,
    ingest_image_folder,
    split_train_test,
)
from .data.partition import Partition, partition_by_source, partition_iid
from .errors import ConfigurationError
from .federation import (
    ClientState,
    FedAvgConfig,
    GlobalState,
    RoundRecord,
    local_training,
    run_round,
)
from .nn.network import ParameterSet, evaluate, init_parameters
from .nn.spec import ModelSpec, default_cnn_spec

TOPOLOGIES = ("cl", "fl", "mefl")
CLIENT_LIMITS = {"fl": (1, 10), "mefl": (2, 10)}
DEFAULT_LR_GRID = (0.001, 0.0001, 0.0005)
CSV_COLUMNS = ("topology", "lr", "clients", "round", "train_loss", "test_accuracy", "seconds", "stop_reason")

# sub-stream tags hashed together with the master seed
_STREAMS = {"data": 1, "augment": 2, "split": 3, "partition": 4, "init": 5}


def component_seed(master: int, component: str) -> int:
    ss = np.random.SeedSequence([master, _STREAMS[component]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class DataConfig:
    kind: str = "synthetic"  # "synthetic" | "folder"
    path: str | None = None
    classes: int = 11
    per_class: int = 20
    skew: float = 0.0
    image_size: int = 128
    augment: bool = True
    split_fraction: float = 0.8
    split_before_augment: bool = False
    source_tags: tuple[str, ...] = ("A", "B")

    def __post_init__(self):
        if self.kind not in ("synthetic", "folder"):
            raise ConfigurationError(f"data.kind must be 'synthetic' or 'folder', got {self.kind!r}")
        if self.kind == "folder" and not self.path:
            raise ConfigurationError("data.kind=folder requires data.path")
        if self.image_size < 4:
            raise ConfigurationError(f"image_size must be >= 4, got {self.image_size}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigurationError(f"split_fraction must be in (0, 1), got {self.split_fraction}")


@dataclass(frozen=True)
class ExperimentConfig:
    topology: str
    clients: int | None = None
    lr: float = 0.0001
    rounds: int = 75
    batch_size: int = 8
    local_epochs: int = 1
    seed: int = 0
    min_epochs: int = 50
    early_stop_delta: float = 1e-6
    data: DataConfig = field(default_factory=DataConfig)
    conv_filters: tuple[int, int, int, int] = (32, 32, 64, 64)
    dense_units: int = 128

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ConfigurationError(f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        if self.clients is None:
            object.__setattr__(self, "clients", 2 if self.topology == "mefl" else 1)
        if self.topology in CLIENT_LIMITS:
            lo, hi = CLIENT_LIMITS[self.topology]
            if not lo <= self.clients <= hi:
                raise ConfigurationError(
                    f"topology {self.topology!r} supports {lo}..{hi} clients, got {self.clients}"
                )
        if self.lr <= 0.0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.rounds < 1:
            raise ConfigurationError(f"rounds must be positive, got {self.rounds}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be positive, got {self.batch_size}")
        if self.local_epochs < 1:
            raise ConfigurationError(f"local_epochs must be positive, got {self.local_epochs}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be non-negative, got {self.seed}")
        if self.min_epochs < 1:
            raise ConfigurationError(f"min_epochs must be positive, got {self.min_epochs}")
        if self.early_stop_delta <= 0.0:
            raise ConfigurationError(f"early_stop_delta must be positive, got {self.early_stop_delta}")


class PreparedData(NamedTuple):
    train: DatasetSource
    test: DatasetSource
    fingerprint: str


@dataclass
class History:
    config: ExperimentConfig
    records: list[RoundRecord]
    final_accuracy: float
    stop_reason: str  # "cap" | "early-stop"
    data_fingerprint: str = ""
    weight_trajectory: list[ParameterSet] | None = None


def prepare_data(data_cfg: DataConfig, seed: int) -> PreparedData:
    """Build, optionally augment, and split the dataset for one experiment.

    The default order augments before splitting (variants of one photo can
    land on both sides); set split_before_augment for the leakage-free order,
    which augments only the training side.
    """
    if data_cfg.kind == "synthetic":
        ds = generate_synthetic(
            data_cfg.classes,
            data_cfg.per_class,
            data_cfg.source_tags,
            data_cfg.skew,
            seed=component_seed(seed, "data"),
            side=data_cfg.image_size,
        )
    else:
        ds = ingest_image_folder(data_cfg.path, side=data_cfg.image_size)
    fp = fingerprint(ds)
    policy = AugmentationPolicy()
    if data_cfg.augment and not data_cfg.split_before_augment:
        ds = augment(ds, policy, seed=component_seed(seed, "augment"))
    train, test = split_train_test(ds, data_cfg.split_fraction, seed=component_seed(seed, "split"))
    if data_cfg.augment and data_cfg.split_before_augment:
        train = augment(train, policy, seed=component_seed(seed, "augment"))
    return PreparedData(train, test, fp)


def model_spec_for(cfg: ExperimentConfig, train: DatasetSource) -> ModelSpec:
    return default_cnn_spec(
        input_side=cfg.data.image_size,
        channels=3,
        n_classes=train.n_classes,
        conv_filters=cfg.conv_filters,
        dense_units=cfg.dense_units,
    )


def early_stop_check(accuracies: Sequence[float], min_epochs: int = 50, delta: float = 1e-6) -> bool:
    """True once more than `min_epochs` epochs have run and the last two test
    accuracies differ by less than `delta`. The first eligible comparison is
    epoch min_epochs+1 against epoch min_epochs."""
    if len(accuracies) <= min_epochs or len(accuracies) < 2:
        return False
    return abs(accuracies[-1] - accuracies[-2]) < delta


def run_centralized(cfg: ExperimentConfig, data: PreparedData | None = None, record_weights: bool = False) -> History:
    """Single-model training on the full training set with early stopping."""
    if cfg.topology != "cl":
        raise ConfigurationError(f"run_centralized needs topology 'cl', got {cfg.topology!r}")
    data = data or prepare_data(cfg.data, cfg.seed)
    spec = model_spec_for(cfg, data.train)
    w = init_parameters(spec, component_seed(cfg.seed, "init"))
    full = Partition(0, np.arange(len(data.train.records)), "*")
    client = ClientState(0, full, w.copy(), cfg.seed)
    test_x, test_y = dataset_arrays(data.test)

    records: list[RoundRecord] = []
    trajectory: list[ParameterSet] | None = [] if record_weights else None
    accs: list[float] = []
    stop_reason = "cap"
    for epoch in range(cfg.rounds):
        t0 = time.perf_counter()
        client.round_index = epoch
        w, _, train_loss = local_training(spec, data.train, client, w, cfg.batch_size, 1, cfg.lr)
        acc, _ = evaluate(spec, w, test_x, test_y)
        records.append(RoundRecord(epoch, acc, train_loss, time.perf_counter() - t0))
        accs.append(acc)
        if trajectory is not None:
            trajectory.append(w.copy())
        if early_stop_check(accs, cfg.min_epochs, cfg.early_stop_delta):
            stop_reason = "early-stop"
            break
    return History(cfg, records, records[-1].test_accuracy, stop_reason, data.fingerprint, trajectory)


def run_federated(
    cfg: ExperimentConfig,
    data: PreparedData | None = None,
    parallel: bool = False,
    record_weights: bool = False,
) -> History:
    """Federated averaging for exactly cfg.rounds rounds (no early stop).

    Topology 'fl' shards IID; 'mefl' gives every client a single-source shard.
    """
    if cfg.topology not in ("fl", "mefl"):
        raise ConfigurationError(f"run_federated needs topology 'fl' or 'mefl', got {cfg.topology!r}")
    data = data or prepare_data(cfg.data, cfg.seed)
    spec = model_spec_for(cfg, data.train)
    w0 = init_parameters(spec, component_seed(cfg.seed, "init"))
    if cfg.topology == "fl":
        partitions = partition_iid(data.train, cfg.clients, component_seed(cfg.seed, "partition"))
    else:
        partitions = partition_by_source(data.train, cfg.clients)
    clients = [ClientState(p.client_id, p, w0.copy(), cfg.seed) for p in partitions]
    state = GlobalState(spec, w0)
    fed_cfg = FedAvgConfig(
        clients=cfg.clients, lr=cfg.lr, batch_size=cfg.batch_size,
        local_epochs=cfg.local_epochs, rounds=cfg.rounds, seed=cfg.seed,
    )
    test_x, test_y = dataset_arrays(data.test)

    records: list[RoundRecord] = []
    trajectory: list[ParameterSet] | None = [] if record_weights else None
    for _ in range(cfg.rounds):
        state, rec = run_round(state, clients, data.train, test_x, test_y, fed_cfg, parallel=parallel)
        records.append(rec)
        if trajectory is not None:
            trajectory.append(state.params.copy())
    return History(cfg, records, records[-1].test_accuracy, "cap", data.fingerprint, trajectory)


def run_experiment(cfg: ExperimentConfig, data: PreparedData | None = None, parallel: bool = False) -> History:
    if cfg.topology == "cl":
        return run_centralized(cfg, data)
    return run_federated(cfg, data, parallel=parallel)


def select_best_lr(results: Sequence[tuple[float, float]]) -> float:
    """Pick the lr with the best final accuracy; ties go to the smaller lr."""
    if not results:
        raise ConfigurationError("no grid results to select from")
    return min(results, key=lambda t: (-t[1], t[0]))[0]


def grid_search(cfg: ExperimentConfig, lrs: Sequence[float] = DEFAULT_LR_GRID):
    """Run the experiment once per learning rate on one shared dataset.

    Returns (best lr, histories in `lrs` order).
    """
    if not lrs:
        raise ConfigurationError("lr grid is empty")
    data = prepare_data(cfg.data, cfg.seed)
    histories = [run_experiment(replace(cfg, lr=lr), data) for lr in lrs]
    best = select_best_lr([(lr, h.final_accuracy) for lr, h in zip(lrs, histories)])
    return best, histories


def client_sweep(cfg: ExperimentConfig, k_values: Sequence[int] | None = None):
    """Run one federated experiment per client count on one shared dataset.

    Returns a list of (k, final accuracy) pairs in k order.
    """
    if cfg.topology not in CLIENT_LIMITS:
        raise ConfigurationError(f"client sweeps need a federated topology, got {cfg.topology!r}")
    lo, hi = CLIENT_LIMITS[cfg.topology]
    ks = list(k_values) if k_values is not None else list(range(lo, hi + 1))
    for k in ks:
        if not lo <= k <= hi:
            raise ConfigurationError(f"k={k} outside {cfg.topology} range {lo}..{hi}")
    data = prepare_data(cfg.data, cfg.seed)
    out = []
    for k in ks:
        h = run_federated(replace(cfg, clients=k), data)
        out.append((k, h.final_accuracy))
    return out


def write_history_csv(history: History, path, include_timing: bool = False) -> None:
    """One row per round in fixed column order. Timing is written as 0.000
    unless requested, so identical runs produce byte-identical files."""
    cfg = history.config
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in history.records:
            writer.writerow([
                cfg.topology,
                repr(cfg.lr),
                cfg.clients,
                rec.round_index,
                repr(float(rec.train_loss)),
                repr(float(rec.test_accuracy)),
                f"{rec.seconds:.3f}" if include_timing else "0.000",
                history.stop_reason,
            ])


def write_summary_csv(rows: Sequence[tuple[str, float, int, float]], path) -> None:
    """Final-accuracy table: one row per run (topology, lr, clients, accuracy)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("topology", "lr", "clients", "final_accuracy"))
        for topology, lr, clients, acc in rows:
            writer.writerow([topology, repr(lr), clients, repr(float(acc))])
