"""
Float FCSNN, surrogate-gradient training and post-training quantization.

The float network is a torch module that mirrors the integer engine: hard reset,
membrane carry ``beta * V * (1 - s)``, linear readout of the final timestep's spikes.
The Heaviside spike uses a boxcar surrogate in the backward pass; torch autograd
unrolls the N_EBBI timesteps.
"""

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from components.dvs_events import EventStream, Label
from components.ebbi_stack import StackConfig, replay_sequences
from components.eval_metrics import RocCurve, roc_from_scores
from components.snn_engine import (
    LEAK_COMPLEMENT,
    V_MAX,
    W_MAX,
    NetworkFileError,
    QuantizedFcsnn,
    classify_batch,
)
from utils.output import Output

out = Output(__name__)

FLOAT_MAGIC = b"SNNFF32"
FLOAT_VERSION = 1
_FLOAT_HEADER = struct.Struct("<7sHHHffff")
_EVAL_CHUNK = 16384
OPTIMIZERS = ("sgd", "adam")


class DatasetError(ValueError):
    """Unlabeled events or a dataset lacking one of the two classes."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.2
    epochs: int = 20
    batch_size: int = 256
    surrogate_slope: float = 1.0
    train_fraction: float = 0.8
    seed: int = 0
    n_hidden: int = 30
    init_scale: float = 2.0
    v_th: float = 1.0
    beta: float = 0.5
    optimizer: str = "sgd"

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.n_hidden < 1:
            raise ValueError("n_hidden must be >= 1")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.v_th <= 0:
            raise ValueError("v_th must be > 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer}")


class BoxcarSpike(torch.autograd.Function):
    """Heaviside of ``V - V_th`` forward; ``slope`` inside ``|V - V_th| < 1/2`` backward."""

    @staticmethod
    def forward(ctx, v_minus_th, slope):
        ctx.save_for_backward(v_minus_th)
        ctx.slope = slope
        return (v_minus_th >= 0).to(v_minus_th.dtype)

    @staticmethod
    def backward(ctx, grad_output):
        (v_minus_th,) = ctx.saved_tensors
        window = (v_minus_th.abs() < 0.5).to(grad_output.dtype)
        return grad_output * ctx.slope * window, None


boxcar_spike = BoxcarSpike.apply


class FloatFcsnn(nn.Module):
    """Two bias-free layers: input -> LIF hidden layer -> scalar readout."""

    def __init__(self, w1, w2, beta: float = 0.5, v_th: float = 1.0, surrogate_slope: float = 1.0):
        super().__init__()
        w1 = torch.as_tensor(np.asarray(w1, dtype=np.float64)).clone()
        w2 = torch.as_tensor(np.asarray(w2, dtype=np.float64)).reshape(-1).clone()
        if w1.ndim != 2 or w1.shape[0] != w2.shape[0]:
            raise ValueError(f"w1 {tuple(w1.shape)} and w2 {tuple(w2.shape)} disagree on N_hidden")
        if not (torch.isfinite(w1).all() and torch.isfinite(w2).all()):
            raise ValueError("Network weights must be finite")
        if not 0.0 < beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {beta}")
        self.fc1 = nn.Linear(w1.shape[1], w1.shape[0], bias=False, dtype=torch.float64)
        self.fc2 = nn.Linear(w1.shape[0], 1, bias=False, dtype=torch.float64)
        with torch.no_grad():
            self.fc1.weight.copy_(w1)
            self.fc2.weight.copy_(w2[None, :])
        self.beta = float(beta)
        self.v_th = float(v_th)
        self.surrogate_slope = float(surrogate_slope)

    @property
    def w1(self) -> np.ndarray:
        return self.fc1.weight.detach().numpy().copy()

    @property
    def w2(self) -> np.ndarray:
        return self.fc2.weight.detach().numpy()[0].copy()

    @property
    def n_hidden(self) -> int:
        return self.fc1.out_features

    @property
    def input_dim(self) -> int:
        return self.fc1.in_features

    def copy(self) -> "FloatFcsnn":
        return FloatFcsnn(self.w1, self.w2, self.beta, self.v_th, self.surrogate_slope)

    def forward(self, sequences: torch.Tensor) -> torch.Tensor:
        """Scores of a ``(B, N_EBBI, 2n^2)`` batch."""
        if sequences.ndim == 2:
            sequences = sequences[None]
        v = sequences.new_zeros((sequences.shape[0], self.n_hidden))
        s = torch.zeros_like(v)
        for k in range(sequences.shape[1]):
            # reset enters as a constant
            v = self.beta * v * (1.0 - s.detach()) + self.fc1(sequences[:, k, :])
            s = boxcar_spike(v - self.v_th, self.surrogate_slope)
        return self.fc2(s).squeeze(-1)


def _as_input(sequences: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.asarray(sequences, dtype=np.float64))


def weighted_bce(scores: torch.Tensor, targets: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """Class-weighted BCE of ``sigmoid(score)``, normalised by the total weight."""
    loss = F.binary_cross_entropy_with_logits(scores, targets, weight=weights, reduction="sum")
    return loss / weights.sum()


@dataclass(frozen=True)
class LabeledSample:
    sequence: np.ndarray
    label: Label


class SampleSet:
    """Column-wise storage of LabeledSamples in replay (chronological) order."""

    def __init__(self, sequences: np.ndarray, labels: np.ndarray, timestamps: np.ndarray):
        if not len(sequences) == len(labels) == len(timestamps):
            raise DatasetError("sequences, labels and timestamps differ in length")
        self.sequences = np.asarray(sequences, dtype=np.uint8)
        self.labels = np.asarray(labels, dtype=np.uint8)
        self.timestamps = np.asarray(timestamps, dtype=np.uint64)

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, index: int) -> LabeledSample:
        return LabeledSample(self.sequences[index], Label(int(self.labels[index])))

    def __iter__(self) -> Iterator[LabeledSample]:
        for index in range(len(self)):
            yield self[index]

    def subset(self, selection) -> "SampleSet":
        return SampleSet(
            self.sequences[selection], self.labels[selection], self.timestamps[selection]
        )

    def class_counts(self) -> tuple[int, int]:
        n_signal = int(np.sum(self.labels == Label.SIGNAL))
        return n_signal, len(self) - n_signal

    def require_both_classes(self, what: str) -> None:
        n_signal, n_noise = self.class_counts()
        if n_signal == 0 or n_noise == 0:
            raise DatasetError(
                f"{what} needs signal and noise samples, got {n_signal} signal / {n_noise} noise"
            )


def build_dataset(
    stream: EventStream, stack_cfg: StackConfig, n: int | None = None, use_banks: bool = False
) -> SampleSet:
    """One sample per event, in stream order, from a replay through a fresh EBBI stack."""
    if not stream.is_fully_labeled():
        raise DatasetError("Every event must be labeled signal or noise to build a dataset")
    if n is not None and n != stack_cfg.patch_size:
        stack_cfg = replace(stack_cfg, patch_size=n)
    sequences = replay_sequences(stream, stack_cfg, use_banks=use_banks)
    samples = SampleSet(sequences, stream.label.copy(), stream.t.copy())
    n_signal, n_noise = samples.class_counts()
    out.log_only(f"Dataset: {len(samples)} samples ({n_signal} signal, {n_noise} noise)")
    return samples


def chronological_split(samples: SampleSet, train_fraction: float) -> tuple[SampleSet, SampleSet]:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n_train = int(round(len(samples) * train_fraction))
    return samples.subset(slice(0, n_train)), samples.subset(slice(n_train, None))


def _class_weights(labels: np.ndarray) -> np.ndarray:
    """Inverse class frequency, normalised so the weights average to one."""
    positive = labels == Label.SIGNAL
    n_pos = int(positive.sum())
    n_neg = len(labels) - n_pos
    return np.where(positive, len(labels) / (2.0 * n_pos), len(labels) / (2.0 * n_neg))


def init_network(input_dim: int, config: TrainConfig, generator: torch.Generator) -> FloatFcsnn:
    std1 = config.init_scale / math.sqrt(input_dim)
    std2 = 1.0 / math.sqrt(config.n_hidden)
    w1 = torch.randn((config.n_hidden, input_dim), generator=generator, dtype=torch.float64) * std1
    w2 = torch.randn(config.n_hidden, generator=generator, dtype=torch.float64) * std2
    return FloatFcsnn(
        w1.numpy(), w2.numpy(), beta=config.beta, v_th=config.v_th,
        surrogate_slope=config.surrogate_slope,
    )


def _make_optimizer(net: FloatFcsnn, config: TrainConfig) -> torch.optim.Optimizer:
    if config.optimizer == "adam":
        return torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    return torch.optim.SGD(net.parameters(), lr=config.learning_rate)


@torch.no_grad()
def dataset_loss(net: FloatFcsnn, samples: SampleSet) -> float:
    weights = torch.from_numpy(_class_weights(samples.labels))
    targets = torch.from_numpy((samples.labels == Label.SIGNAL).astype(np.float64))
    total = 0.0
    for start in range(0, len(samples), _EVAL_CHUNK):
        chunk = slice(start, start + _EVAL_CHUNK)
        scores = net(_as_input(samples.sequences[chunk]))
        total += float(
            F.binary_cross_entropy_with_logits(
                scores, targets[chunk], weight=weights[chunk], reduction="sum"
            )
        )
    return total / float(weights.sum())


def train(
    samples: SampleSet,
    config: TrainConfig,
    on_epoch: Callable[[int, float, FloatFcsnn], None] | None = None,
) -> FloatFcsnn:
    """
    Minibatch training over shuffled samples; returns the weights with the lowest
    training loss seen, the initialization included.
    """
    samples.require_both_classes("Training")
    generator = torch.Generator().manual_seed(config.seed)
    net = init_network(samples.sequences.shape[-1], config, generator)
    optimizer = _make_optimizer(net, config)
    weights = torch.from_numpy(_class_weights(samples.labels))
    targets = torch.from_numpy((samples.labels == Label.SIGNAL).astype(np.float64))

    best_loss = dataset_loss(net, samples)
    best = net.copy()
    out.log_only(f"Epoch 0: loss={best_loss:.6f} optimizer={config.optimizer}")
    if on_epoch:
        on_epoch(0, best_loss, net)

    for epoch in range(1, config.epochs + 1):
        net.train()
        order = torch.randperm(len(samples), generator=generator)
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            optimizer.zero_grad()
            scores = net(_as_input(samples.sequences[batch.numpy()]))
            loss = weighted_bce(scores, targets[batch], weights[batch])
            loss.backward()
            optimizer.step()
        net.eval()
        epoch_loss = dataset_loss(net, samples)
        out.log_only(f"Epoch {epoch}: loss={epoch_loss:.6f}")
        if on_epoch:
            on_epoch(epoch, epoch_loss, net)
        if epoch_loss <= best_loss:
            best_loss = epoch_loss
            best = net.copy()
    return best


def _scale(w: np.ndarray) -> float:
    peak = float(np.max(np.abs(w))) if w.size else 0.0
    return peak / W_MAX if peak > 0 else 1.0


def encode_beta(beta: float) -> int:
    """Nearest leak byte: plain shift 2^-k preferred over the 1 - 2^-k form on ties."""
    candidates = [(abs(2.0**-k - beta), k) for k in range(16)]
    candidates += [(abs(1.0 - 2.0**-k - beta), k | LEAK_COMPLEMENT) for k in range(2, 16)]
    return min(candidates, key=lambda c: c[0])[1]


def quantize(net: FloatFcsnn) -> QuantizedFcsnn:
    """Per-tensor symmetric 8-bit weights; threshold scaled by the hidden-layer scale."""
    if not (np.all(np.isfinite(net.w1)) and np.all(np.isfinite(net.w2))):
        raise ValueError("Cannot quantize non-finite weights")
    s1 = _scale(net.w1)
    s2 = _scale(net.w2)
    w1 = np.clip(np.round(net.w1 / s1), -W_MAX, W_MAX).astype(np.int32)
    w2 = np.clip(np.round(net.w2 / s2), -W_MAX, W_MAX).astype(np.int32)
    v_th = int(np.clip(round(net.v_th / s1), 1, V_MAX))
    return QuantizedFcsnn(w1=w1, w2=w2, v_th=v_th, beta_shift=encode_beta(net.beta), s1=s1, s2=s2)


def dequantize(net: QuantizedFcsnn) -> FloatFcsnn:
    return FloatFcsnn(
        w1=net.w1 * net.s1, w2=net.w2 * net.s2, beta=net.beta, v_th=net.v_th * net.s1
    )


def quantized_scores(net: QuantizedFcsnn, samples: SampleSet) -> np.ndarray:
    scores = np.zeros(len(samples), dtype=np.int32)
    for start in range(0, len(samples), _EVAL_CHUNK):
        chunk = slice(start, start + _EVAL_CHUNK)
        scores[chunk] = classify_batch(net, samples.sequences[chunk])[1]
    return scores


@torch.no_grad()
def float_scores(net: FloatFcsnn, samples: SampleSet) -> np.ndarray:
    scores = np.zeros(len(samples))
    for start in range(0, len(samples), _EVAL_CHUNK):
        chunk = slice(start, start + _EVAL_CHUNK)
        scores[chunk] = net(_as_input(samples.sequences[chunk])).numpy()
    return scores


def sweep_threshold(net: QuantizedFcsnn, samples: SampleSet) -> RocCurve:
    samples.require_both_classes("Threshold sweep")
    return roc_from_scores(quantized_scores(net, samples), samples.labels)


def agreement(float_net: FloatFcsnn, qnet: QuantizedFcsnn, samples: SampleSet) -> float:
    """Fraction of samples on which both nets agree at threshold 0."""
    if len(samples) == 0:
        return 1.0
    same = (float_scores(float_net, samples) >= 0) == (quantized_scores(qnet, samples) >= 0)
    return float(np.mean(same))


def save_float_checkpoint(net: FloatFcsnn, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _FLOAT_HEADER.pack(
        FLOAT_MAGIC, FLOAT_VERSION, net.input_dim, net.n_hidden, net.v_th, net.beta, 1.0, 1.0
    )
    with path.open("wb") as handle:
        handle.write(header)
        handle.write(net.w1.astype("<f4").tobytes(order="C"))
        handle.write(net.w2.astype("<f4").tobytes())
    out.log_only(f"Saved float checkpoint to {path}")


def load_float_checkpoint(path) -> FloatFcsnn:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _FLOAT_HEADER.size:
        raise NetworkFileError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, input_dim, n_hidden, v_th, beta, _, _ = _FLOAT_HEADER.unpack_from(data)
    if magic != FLOAT_MAGIC:
        raise NetworkFileError(f"{path}: bad magic {magic!r}")
    if version != FLOAT_VERSION:
        raise NetworkFileError(f"{path}: unsupported version {version}")
    expected = _FLOAT_HEADER.size + 4 * (input_dim * n_hidden + n_hidden)
    if len(data) != expected:
        raise NetworkFileError(f"{path}: expected {expected} bytes, found {len(data)}")
    weights = np.frombuffer(data, dtype="<f4", offset=_FLOAT_HEADER.size).astype(np.float64)
    try:
        return FloatFcsnn(
            w1=weights[: input_dim * n_hidden].reshape(n_hidden, input_dim),
            w2=weights[input_dim * n_hidden :],
            beta=float(beta),
            v_th=float(v_th),
        )
    except ValueError as exc:
        raise NetworkFileError(f"{path}: {exc}") from exc
