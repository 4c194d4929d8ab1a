"""Federated averaging: per-client local SGD, weighted aggregation, round loop.

Every client owns a deterministic RNG stream derived from (master seed,
client id, round index), so results are bit-identical whether clients run
serially or on a thread pool.
"""
from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data.corpus import DatasetSource, dataset_arrays
from .data.partition import Partition
from .errors import ConfigurationError, ProtocolError
from .nn.network import LayerParams, ParameterSet, evaluate, loss_and_grad, sgd_step
from .nn.spec import ModelSpec
from .wire import (  # noqa: F401  (protocol codec, re-exported as part of the federation surface)
    ParameterMessage,
    decode_parameter_message,
    encode_parameter_message,
)

_CLIENT_STREAM_TAG = 11


def client_stream(seed: int, client_id: int, round_index: int) -> np.random.Generator:
    """The RNG stream a client uses for one round (shuffling and dropout)."""
    ss = np.random.SeedSequence([seed, _CLIENT_STREAM_TAG, client_id, round_index])
    return np.random.default_rng(ss)


@dataclass
class FedAvgConfig:
    clients: int
    lr: float
    batch_size: int = 8
    local_epochs: int = 1
    rounds: int = 75
    seed: int = 0

    def __post_init__(self):
        if self.clients < 1:
            raise ConfigurationError(f"clients must be positive, got {self.clients}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be positive, got {self.batch_size}")
        if self.local_epochs < 0:
            raise ConfigurationError(f"local_epochs must be >= 0, got {self.local_epochs}")
        if self.lr <= 0.0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.rounds < 1:
            raise ConfigurationError(f"rounds must be positive, got {self.rounds}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be non-negative, got {self.seed}")


@dataclass
class ClientState:
    client_id: int
    partition: Partition
    params: ParameterSet
    seed: int
    round_index: int = 0


@dataclass
class GlobalState:
    spec: ModelSpec
    params: ParameterSet
    round_index: int = 0


@dataclass
class RoundRecord:
    round_index: int
    test_accuracy: float
    train_loss: float  # mean over clients of their mean local batch loss
    seconds: float


def local_training(
    spec: ModelSpec,
    dataset: DatasetSource,
    client: ClientState,
    w: ParameterSet,
    batch_size: int,
    local_epochs: int,
    lr: float,
):
    """Run `local_epochs` passes of minibatch SGD on the client's partition.

    Batch order comes from the client's round stream applied to the sorted
    index list, so it depends only on the index set, the seed, the client id,
    and the round. Returns (new weights, n_k, mean batch loss).
    """
    rng = client_stream(client.seed, client.client_id, client.round_index)
    idx = np.sort(np.asarray(client.partition.indices))
    n_k = len(idx)
    w_cur = w.copy()
    loss_sum = 0.0
    batches = 0
    for _ in range(local_epochs):
        order = rng.permutation(n_k)
        shuffled = idx[order]
        for start in range(0, n_k, batch_size):
            sel = shuffled[start:start + batch_size]
            xb, yb = dataset_arrays(dataset, sel)
            loss, grads = loss_and_grad(spec, w_cur, xb, yb, rng=rng)
            w_cur = sgd_step(w_cur, grads, lr)
            loss_sum += loss
            batches += 1
    return w_cur, n_k, (loss_sum / batches if batches else 0.0)


def _canonical_order(updates):
    """Sort updates by (n_k desc, content digest) so the result is a pure
    function of the update multiset, making aggregation exactly
    permutation-invariant."""
    def key(item):
        n_k, params = item
        h = hashlib.sha256()
        for e in params.entries:
            h.update(np.ascontiguousarray(e.weights, dtype="<f4").tobytes())
            h.update(np.ascontiguousarray(e.biases, dtype="<f4").tobytes())
        return (-n_k, h.digest())

    return sorted(updates, key=key)


def fedavg_aggregate(updates: list[tuple[int, ParameterSet]]) -> ParameterSet:
    """Weighted average of client weights: sum_k (n_k / n) * w_k.

    Accumulates n_k * w_k in float64 and divides by n at the end, then rounds
    back to float32.
    """
    if not updates:
        raise ProtocolError("cannot aggregate an empty update list")
    ref = updates[0][1]
    for n_k, params in updates:
        if n_k <= 0:
            raise ProtocolError(f"update weight n_k must be positive, got {n_k}")
        if len(params.entries) != len(ref.entries):
            raise ProtocolError("updates disagree on the number of parameter tensors")
        for a, b in zip(params.entries, ref.entries):
            if a.layer_id != b.layer_id or a.weights.shape != b.weights.shape or a.biases.shape != b.biases.shape:
                raise ProtocolError(
                    f"update shape mismatch at layer {b.layer_id}: "
                    f"{a.weights.shape}/{a.biases.shape} vs {b.weights.shape}/{b.biases.shape}"
                )

    ordered = _canonical_order(updates)
    total = float(sum(n_k for n_k, _ in ordered))
    acc_w = [np.zeros(e.weights.shape, dtype=np.float64) for e in ref.entries]
    acc_b = [np.zeros(e.biases.shape, dtype=np.float64) for e in ref.entries]
    for n_k, params in ordered:
        for i, e in enumerate(params.entries):
            acc_w[i] += n_k * e.weights.astype(np.float64)
            acc_b[i] += n_k * e.biases.astype(np.float64)
    entries = [
        LayerParams(ref.entries[i].layer_id,
                    (acc_w[i] / total).astype(np.float32),
                    (acc_b[i] / total).astype(np.float32))
        for i in range(len(ref.entries))
    ]
    return ParameterSet(entries)


def global_objective(
    spec: ModelSpec,
    params: ParameterSet,
    dataset: DatasetSource,
    partitions: list[Partition],
) -> float:
    """sum_k (n_k / n) * F_k(w) where F_k is the mean eval-mode loss on
    partition k. Equals the mean loss over the union for any disjoint
    partitioning."""
    if not partitions:
        raise ProtocolError("no partitions given")
    seen: set[int] = set()
    total = 0
    for p in partitions:
        if p.n_k == 0:
            raise ProtocolError(f"partition {p.client_id} is empty")
        ids = set(int(i) for i in p.indices)
        if seen & ids:
            raise ProtocolError("partitions overlap")
        seen |= ids
        total += p.n_k
    value = 0.0
    for p in partitions:
        xb, yb = dataset_arrays(dataset, p.indices)
        _, mean_loss = evaluate(spec, params, xb, yb)
        value += (p.n_k / total) * mean_loss
    return value


def run_round(
    state: GlobalState,
    clients: list[ClientState],
    train: DatasetSource,
    test_images: np.ndarray,
    test_labels: np.ndarray,
    cfg: FedAvgConfig,
    parallel: bool = False,
):
    """One federated round: local training on every client from the current
    global weights, weighted aggregation, sync back, evaluation.

    Any client failure propagates and aborts the round; there is no partial
    aggregation. Returns (next GlobalState, RoundRecord).
    """
    if not clients:
        raise ProtocolError("cannot run a round with no clients")
    t0 = time.perf_counter()
    for c in clients:
        c.round_index = state.round_index

    def train_one(c: ClientState):
        return local_training(
            state.spec, train, c, state.params, cfg.batch_size, cfg.local_epochs, cfg.lr
        )

    if parallel and len(clients) > 1:
        import os

        with ThreadPoolExecutor(max_workers=min(len(clients), os.cpu_count() or 1)) as ex:
            results = list(ex.map(train_one, clients))
    else:
        results = [train_one(c) for c in clients]

    w_next = fedavg_aggregate([(n_k, w_k) for w_k, n_k, _ in results])
    for c in clients:
        c.params = w_next.copy()
    acc, _ = evaluate(state.spec, w_next, test_images, test_labels)
    train_loss = float(np.mean([r[2] for r in results]))
    record = RoundRecord(state.round_index, acc, train_loss, time.perf_counter() - t0)
    return GlobalState(state.spec, w_next, state.round_index + 1), record
