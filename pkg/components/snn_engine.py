"""
Integer forward pass of the single-hidden-layer spiking classifier.

Membranes are 12-bit signed and saturate; weights are 8-bit signed. The leak is a
shift: ``V >> k`` (beta = 2^-k) or, with ``LEAK_COMPLEMENT`` set in the stored byte,
``V - (V >> k)`` (beta = 1 - 2^-k). All functions accept a leading batch axis.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from components.dvs_events import Label
from utils.output import Output

out = Output(__name__)

NETWORK_MAGIC = b"SNNF"
NETWORK_VERSION = 1
MEMBRANE_BITS = 12
WEIGHT_BITS = 8
V_MIN = -(1 << (MEMBRANE_BITS - 1))
V_MAX = (1 << (MEMBRANE_BITS - 1)) - 1
W_MIN = -(1 << (WEIGHT_BITS - 1))
W_MAX = (1 << (WEIGHT_BITS - 1)) - 1
LEAK_COMPLEMENT = 0x80
_HEADER = struct.Struct("<4sHHHiBff")


class NetworkFileError(ValueError):
    """Bad magic, version, shape or size in a network file."""


class DimensionMismatchError(ValueError):
    """Input vector, spike vector or sequence length does not match the network."""


@dataclass(frozen=True)
class QuantizedFcsnn:
    w1: np.ndarray
    w2: np.ndarray
    v_th: int
    beta_shift: int = 1
    s1: float = 1.0
    s2: float = 1.0
    membrane_bits: int = MEMBRANE_BITS

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=np.int32)
        w2 = np.asarray(self.w2, dtype=np.int32).reshape(-1)
        if w1.ndim != 2 or w1.shape[0] != w2.shape[0]:
            raise DimensionMismatchError(
                f"w1 {w1.shape} and w2 {w2.shape} disagree on N_hidden"
            )
        if w1.min(initial=0) < W_MIN or w1.max(initial=0) > W_MAX:
            raise ValueError("w1 outside 8-bit signed range")
        if w2.min(initial=0) < W_MIN or w2.max(initial=0) > W_MAX:
            raise ValueError("w2 outside 8-bit signed range")
        if self.v_th <= 0:
            raise ValueError(f"v_th must be > 0, got {self.v_th}")
        if not 0 <= (self.beta_shift & ~LEAK_COMPLEMENT) <= 15:
            raise ValueError(f"beta_shift amount out of range: {self.beta_shift}")
        w1.setflags(write=False)
        w2.setflags(write=False)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)

    @property
    def n_hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def beta(self) -> float:
        k = self.beta_shift & ~LEAK_COMPLEMENT
        if self.beta_shift & LEAK_COMPLEMENT:
            return 1.0 - 2.0**-k
        return 2.0**-k

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QuantizedFcsnn):
            return NotImplemented
        return (
            np.array_equal(self.w1, other.w1)
            and np.array_equal(self.w2, other.w2)
            and self.v_th == other.v_th
            and self.beta_shift == other.beta_shift
            and np.float32(self.s1) == np.float32(other.s1)
            and np.float32(self.s2) == np.float32(other.s2)
        )


@dataclass
class LifState:
    membranes: np.ndarray
    last_spikes: np.ndarray

    @classmethod
    def zeros(cls, n_hidden: int, batch: tuple[int, ...] = ()) -> "LifState":
        return cls(
            membranes=np.zeros(batch + (n_hidden,), dtype=np.int32),
            last_spikes=np.zeros(batch + (n_hidden,), dtype=bool),
        )


def leak(net: QuantizedFcsnn, v: np.ndarray) -> np.ndarray:
    k = net.beta_shift & ~LEAK_COMPLEMENT
    shifted = np.right_shift(v, k)
    if net.beta_shift & LEAK_COMPLEMENT:
        return v - shifted
    return shifted


def lif_step(net: QuantizedFcsnn, state: LifState, x_k: np.ndarray) -> np.ndarray:
    """One timestep: leak with hard reset, integrate, saturate, fire. Mutates ``state``."""
    x_k = np.asarray(x_k)
    if x_k.shape[-1] != net.input_dim:
        raise DimensionMismatchError(
            f"Input length {x_k.shape[-1]} does not match network input {net.input_dim}"
        )
    carry = np.where(state.last_spikes, 0, leak(net, state.membranes))
    current = x_k.astype(np.int32) @ net.w1.T
    v = np.clip(carry + current, V_MIN, V_MAX).astype(np.int32)
    spikes = v >= net.v_th
    state.membranes = v
    state.last_spikes = spikes
    return spikes


def readout(net: QuantizedFcsnn, spikes: np.ndarray) -> np.ndarray | int:
    spikes = np.asarray(spikes)
    if spikes.shape[-1] != net.n_hidden:
        raise DimensionMismatchError(
            f"Spike vector length {spikes.shape[-1]} does not match N_hidden {net.n_hidden}"
        )
    score = spikes.astype(np.int32) @ net.w2
    return int(score) if np.ndim(score) == 0 else score


def _run_sequence(net: QuantizedFcsnn, sequences: np.ndarray) -> np.ndarray:
    state = LifState.zeros(net.n_hidden, sequences.shape[:-2])
    spikes = state.last_spikes
    for k in range(sequences.shape[-2]):
        spikes = lif_step(net, state, sequences[..., k, :])
    return spikes


def classify_event(
    net: QuantizedFcsnn, seq: np.ndarray, theta: int, n_ebbi: int | None = None
) -> tuple[Label, int]:
    """Return ``(decision, score)``; signal iff the readout score >= ``theta``."""
    seq = np.asarray(seq)
    if seq.ndim != 2 or (n_ebbi is not None and seq.shape[0] != n_ebbi):
        raise DimensionMismatchError(
            f"Sequence shape {seq.shape} does not match N_EBBI={n_ebbi}"
        )
    score = readout(net, _run_sequence(net, seq))
    return (Label.SIGNAL if score >= theta else Label.NOISE), score


def classify_batch(
    net: QuantizedFcsnn, sequences: np.ndarray, theta: int | None = None
) -> tuple[np.ndarray | None, np.ndarray]:
    """Vectorised ``classify_event`` over axis 0; decisions are None without ``theta``."""
    sequences = np.asarray(sequences)
    if sequences.ndim != 3:
        raise DimensionMismatchError(f"Expected (batch, N_EBBI, 2n^2), got {sequences.shape}")
    if len(sequences) == 0:
        scores = np.zeros(0, dtype=np.int32)
    else:
        scores = np.asarray(readout(net, _run_sequence(net, sequences)), dtype=np.int32)
    decisions = None if theta is None else scores >= theta
    return decisions, scores


def save_network(net: QuantizedFcsnn, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(
        NETWORK_MAGIC,
        NETWORK_VERSION,
        net.input_dim,
        net.n_hidden,
        int(net.v_th),
        int(net.beta_shift),
        float(net.s1),
        float(net.s2),
    )
    with path.open("wb") as handle:
        handle.write(header)
        handle.write(net.w1.astype(np.int8).tobytes(order="C"))
        handle.write(net.w2.astype(np.int8).tobytes())
    out.log_only(f"Saved network {net.n_hidden}x{net.input_dim} to {path}")


def load_network(path) -> QuantizedFcsnn:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise NetworkFileError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, input_dim, n_hidden, v_th, beta_shift, s1, s2 = _HEADER.unpack_from(data)
    if magic != NETWORK_MAGIC:
        raise NetworkFileError(f"{path}: bad magic {magic!r}")
    if version != NETWORK_VERSION:
        raise NetworkFileError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + input_dim * n_hidden + n_hidden
    if len(data) != expected:
        raise NetworkFileError(
            f"{path}: expected {expected} bytes for a {n_hidden}x{input_dim} network, "
            f"found {len(data)}"
        )
    w1 = np.frombuffer(data, dtype=np.int8, count=input_dim * n_hidden, offset=_HEADER.size)
    w2 = np.frombuffer(
        data, dtype=np.int8, count=n_hidden, offset=_HEADER.size + input_dim * n_hidden
    )
    try:
        return QuantizedFcsnn(
            w1=w1.reshape(n_hidden, input_dim),
            w2=w2,
            v_th=v_th,
            beta_shift=beta_shift,
            s1=s1,
            s2=s2,
        )
    except ValueError as exc:
        raise NetworkFileError(f"{path}: {exc}") from exc
