"""Federated training with quantized broadcast and quantized client updates.

Each round the server quantizes the global model once and sends the same
tensor to every client.  Clients run ``tau`` SGD steps from the received
model, quantize the difference between their local model and the received
model, and upload it.  The server adds the data-weighted sum of the
dequantized updates to its (unquantized) global model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .allocation import DOWNLINK, UPLINK, AllocationPolicy, BitChoice, Lossless
from .datasets import Dataset, Partition, iid_partition
from .energy import EnergyLedger
from .errors import InvalidArgument, NumericError
from .models import ModelSpec, evaluate, init_params, loss_grad_array
from .params import ParamVector, range_of
from .quantizer import QuantizedTensor, dequantize, quantize
from .rng import hash64

log = logging.getLogger(__name__)

# energy charged per element when a link runs in lossless passthrough mode
LOSSLESS_BITS = 32


@dataclass(frozen=True)
class Packet:
    """One transmission: the decoded vector plus its wire form (``None`` when lossless)."""

    vector: ParamVector
    tensor: QuantizedTensor | None
    bits: int
    value_range: float
    clamped: bool = False

    @property
    def lossless(self) -> bool:
        return self.tensor is None


def make_packet(v: ParamVector, choice: BitChoice, seed: int) -> Packet:
    r = range_of(v).range
    if choice.bits is None:
        return Packet(v, None, LOSSLESS_BITS, r)
    q = quantize(v, choice.bits, seed)
    return Packet(dequantize(q), q, choice.bits, r, choice.clamped)


def downlink_seed(run_seed: int, round_idx: int) -> int:
    return hash64(run_seed, round_idx, "server", DOWNLINK)


def uplink_seed(run_seed: int, round_idx: int, client_id: int) -> int:
    return hash64(run_seed, round_idx, client_id, UPLINK)


def batch_seed(run_seed: int, round_idx: int, client_id: int) -> int:
    return hash64(run_seed, round_idx, client_id, "batch")


@dataclass
class ClientState:
    id: int
    data: Dataset
    model: ModelSpec
    w_local: ParamVector | None = None
    momentum_buffer: np.ndarray | None = None
    rng_seed: int = 0
    last_loss: float = float("nan")
    last_grad_norm_sq: float = float("nan")

    def local_train(
        self,
        w_received: ParamVector,
        tau: int,
        eta: float,
        batch_size: int,
        *,
        momentum: float = 0.0,
        seed: int | None = None,
        start_step: int = 0,
    ) -> ParamVector:
        """Run ``tau`` SGD steps from ``w_received`` and return the local model.

        Step ``t`` (counted from ``start_step``) draws its minibatch from
        ``hash64(seed, t)``, so two calls of one step each, chained through
        ``start_step`` and the momentum buffer, equal one call of two steps.
        """
        if tau < 1:
            raise InvalidArgument(f"tau must be >= 1, got {tau}")
        if eta <= 0:
            raise InvalidArgument(f"eta must be positive, got {eta}")
        if seed is None:
            seed = self.rng_seed
        N = len(self.data)
        if batch_size >= N:
            if batch_size > N:
                log.warning("client %d: batch size %d clamped to shard size %d", self.id, batch_size, N)
            batch_size = N
        X, y = self.data.features, self.data.labels
        w = np.array(w_received.values)
        buf = self.momentum_buffer
        losses = []
        gsq = []
        for t in range(start_step, start_step + tau):
            if batch_size == N:
                Xb, yb = X, y
            else:
                idx = np.random.default_rng(hash64(seed, t)).choice(N, batch_size, replace=False)
                Xb, yb = X[idx], y[idx]
            loss, g = loss_grad_array(self.model, w, Xb, yb)
            losses.append(loss)
            gsq.append(float(g @ g))
            if momentum:
                buf = g if buf is None else momentum * buf + g
                step = buf
            else:
                step = g
            w = w - eta * step
        if not np.all(np.isfinite(w)):
            raise NumericError(f"client {self.id}: local training diverged")
        self.momentum_buffer = buf if momentum else None
        self.last_loss = float(np.mean(losses))
        self.last_grad_norm_sq = float(np.mean(gsq))
        self.w_local = ParamVector(w)
        return self.w_local


@dataclass(frozen=True)
class Upload:
    client_id: int
    packet: Packet
    update: ParamVector  # unquantized update, for diagnostics
    loss: float
    grad_norm_sq: float


@dataclass(frozen=True)
class TrainSettings:
    tau: int
    eta: float
    batch_size: int
    momentum: float = 0.0
    run_seed: int = 0

    def __post_init__(self):
        if self.tau < 1:
            raise InvalidArgument(f"tau must be >= 1, got {self.tau}")
        if not self.eta > 0:
            raise InvalidArgument(f"eta must be positive, got {self.eta}")
        if self.batch_size < 1:
            raise InvalidArgument("batch_size must be >= 1")
        if not 0 <= self.momentum < 1:
            raise InvalidArgument("momentum must be in [0, 1)")


def client_round(
    client: ClientState,
    broadcast: Packet,
    policy: AllocationPolicy,
    round_idx: int,
    n: int,
    settings: TrainSettings,
    ledger: EnergyLedger | None = None,
) -> Upload:
    """Local training on the received model, then quantize and charge the update."""
    w_recv = broadcast.vector
    w_tau = client.local_train(
        w_recv, settings.tau, settings.eta, settings.batch_size,
        momentum=settings.momentum,
        seed=batch_seed(settings.run_seed, round_idx, client.id),
    )
    delta = w_tau - w_recv
    choice = policy.choose(UPLINK, range_of(delta).range, round_idx, n)
    packet = make_packet(delta, choice, uplink_seed(settings.run_seed, round_idx, client.id))
    if ledger is not None:
        ledger.record(round_idx, UPLINK, client.id, len(delta), packet.bits)
    return Upload(client.id, packet, delta, client.last_loss, client.last_grad_norm_sq)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    train_loss: float
    test_accuracy: float
    test_loss: float
    uplink_ranges: tuple[float, ...]
    downlink_range: float
    uplink_bits: tuple[int, ...]
    downlink_bits: int
    energy_up: float
    energy_down: float
    grad_norm_sq_mean: float
    clamp_events: int = 0


@dataclass
class ServerState:
    w_global: ParamVector
    policy: AllocationPolicy
    ledger: EnergyLedger
    round: int = 0
    history: list[RoundRecord] = field(default_factory=list)
    last_broadcast: Packet | None = None
    last_uploads: tuple[Upload, ...] = ()


def aggregate(w: ParamVector, updates: list[ParamVector], p) -> ParamVector:
    """``w + sum_i p_i * update_i`` accumulated in client order."""
    acc = np.zeros(len(w))
    for pi, u in zip(p, updates):
        acc += pi * u.values
    return ParamVector(w.values + acc)


def server_round(
    server: ServerState,
    clients: list[ClientState],
    partition: Partition,
    settings: TrainSettings,
    test: Dataset | None = None,
    model: ModelSpec | None = None,
) -> RoundRecord:
    m = server.round
    n = len(clients)
    if n != partition.n:
        raise InvalidArgument(f"{n} clients but partition has {partition.n} parts")
    w = server.w_global
    d = len(w)

    choice = server.policy.choose(DOWNLINK, range_of(w).range, m, n)
    broadcast = make_packet(w, choice, downlink_seed(settings.run_seed, m))
    energy_before = server.ledger.total()

    uploads = []
    for client in sorted(clients, key=lambda c: c.id):
        # one broadcast, paid for by every receiving client
        server.ledger.record(m, DOWNLINK, client.id, d, broadcast.bits)
        uploads.append(client_round(client, broadcast, server.policy, m, n, settings, server.ledger))

    w_next = aggregate(w, [u.packet.vector for u in uploads], partition.p)
    energy_after = server.ledger.total()

    if test is not None and model is not None:
        metrics = evaluate(model, w_next, test.features, test.labels)
    else:
        metrics = {"accuracy": float("nan"), "loss": float("nan")}

    record = RoundRecord(
        round=m,
        train_loss=float(np.mean([u.loss for u in uploads])),
        test_accuracy=metrics["accuracy"],
        test_loss=metrics["loss"],
        uplink_ranges=tuple(u.packet.value_range for u in uploads),
        downlink_range=broadcast.value_range,
        uplink_bits=tuple(u.packet.bits for u in uploads),
        downlink_bits=broadcast.bits,
        energy_up=energy_after.uplink - energy_before.uplink,
        energy_down=energy_after.downlink - energy_before.downlink,
        grad_norm_sq_mean=float(np.mean([u.grad_norm_sq for u in uploads])),
        clamp_events=int(broadcast.clamped) + sum(int(u.packet.clamped) for u in uploads),
    )
    server.w_global = w_next
    server.last_broadcast = broadcast
    server.last_uploads = tuple(uploads)
    server.history.append(record)
    server.round += 1
    return record


@dataclass(frozen=True)
class FLConfig:
    model: ModelSpec
    train: Dataset
    test: Dataset
    n: int
    K: int
    settings: TrainSettings
    policy: AllocationPolicy = field(default_factory=Lossless)
    e1: float = 1.0
    e2: float = 1.0
    init_seed: int | None = None

    def validate(self):
        if self.n < 1 or self.n > len(self.train):
            raise InvalidArgument(f"cannot split {len(self.train)} samples across {self.n} clients")
        if self.K < 0:
            raise InvalidArgument("K must be >= 0")
        for name, ds in (("train", self.train), ("test", self.test)):
            if ds.num_features != self.model.input_dim:
                raise InvalidArgument(
                    f"{name} data has {ds.num_features} features, model expects {self.model.input_dim}"
                )
            if ds.labels.max() >= self.model.classes:
                raise InvalidArgument(f"{name} labels exceed the model's {self.model.classes} classes")


@dataclass
class RunResult:
    history: list[RoundRecord]
    ledger: EnergyLedger
    final_model: ParamVector
    partition: Partition


def setup(config: FLConfig) -> tuple[ServerState, list[ClientState], Partition]:
    config.validate()
    run_seed = config.settings.run_seed
    partition = iid_partition(config.train, config.n, hash64(run_seed, "partition"))
    init_seed = hash64(run_seed, "init") if config.init_seed is None else config.init_seed
    w0 = init_params(config.model, init_seed)
    clients = [
        ClientState(id=i, data=config.train.subset(idx), model=config.model,
                    rng_seed=hash64(run_seed, "client", i))
        for i, idx in enumerate(partition.client_indices)
    ]
    server = ServerState(w_global=w0, policy=config.policy, ledger=EnergyLedger(config.e1, config.e2))
    return server, clients, partition


def run_federated(config: FLConfig) -> RunResult:
    server, clients, partition = setup(config)
    for _ in range(config.K):
        server_round(server, clients, partition, config.settings, config.test, config.model)
    return RunResult(server.history, server.ledger, server.w_global, partition)
