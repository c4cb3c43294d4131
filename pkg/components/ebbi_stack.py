"""
EBBI stack (round-robin binary image pairs), its banked bit-packed memory image,
and per-event patch extraction.

Slots are numbered 1..N_EBBI+1 as in the hardware description. Plane 0 of a pair
holds positive events, plane 1 negative events, so a flattened (plane, row, col)
block is already the positive-then-negative feature vector.

Bank layout
-----------
Image row ``y`` lives in bank ``y mod N_mem`` at bank row ``y // N_mem``. Inside a
bank the address space is split into one region per (slot, plane), slot-major;
each region holds ``ceil(H / N_mem)`` rows of ``ceil(W / W_word)`` words. Column
``x`` is bit ``x mod W_word`` (bit 0 = lowest column) of word ``x // W_word``.

Worked example (W=346, H=260, N_mem=5, W_word=4): rows_per_bank=52,
words_per_row=87, region=4524 words. Pixel (x=6, y=7) of slot 2, negative plane:
bank 2, address (1*2+1)*4524 + 1*87 + 1 = 13660, bit 2.
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from components.dvs_events import Event, EventValidationError, Polarity, SensorGeometry
from utils.output import Output

out = Output(__name__)

# PatchSequence: uint8 array of shape (N_EBBI, 2*n*n), oldest pair first.
PatchSequence = np.ndarray


class EbbiConfigError(ValueError):
    """Invalid stack, bank or patch configuration."""


class TriggerMode(str, Enum):
    FIXED_TIME = "fixed_time"
    FIXED_COUNT = "fixed_count"


@dataclass(frozen=True)
class EbbiTrigger:
    """Window closing rule: ``value`` is T_e in microseconds or N_e in events."""

    mode: TriggerMode
    value: int

    def __post_init__(self):
        object.__setattr__(self, "mode", TriggerMode(self.mode))
        if self.value < 1:
            raise EbbiConfigError(f"EBBI trigger value must be >= 1, got {self.value}")

    @classmethod
    def fixed_time(cls, t_e_us: int) -> "EbbiTrigger":
        return cls(TriggerMode.FIXED_TIME, int(t_e_us))

    @classmethod
    def fixed_count(cls, n_e: int) -> "EbbiTrigger":
        return cls(TriggerMode.FIXED_COUNT, int(n_e))


@dataclass(frozen=True)
class BankConfig:
    n_banks: int = 5
    word_bits: int = 4

    def __post_init__(self):
        if self.n_banks < 1:
            raise EbbiConfigError(f"n_banks must be >= 1, got {self.n_banks}")
        if not 1 <= self.word_bits <= 16:
            raise EbbiConfigError(f"word_bits must be in [1, 16], got {self.word_bits}")


def _plane(polarity: int) -> int:
    return 0 if polarity == Polarity.POSITIVE else 1


def _check_patch_size(n: int) -> None:
    if n < 1 or n % 2 == 0:
        raise EbbiConfigError(f"Patch size must be a positive odd number, got {n}")


class BankedMemory:
    """Bit-packed storage of every slot and polarity plane across ``n_banks`` banks."""

    def __init__(self, geometry: SensorGeometry, n_slots: int, config: BankConfig):
        self.geometry = geometry
        self.n_slots = n_slots
        self.config = config
        self.rows_per_bank = -(-geometry.height // config.n_banks)
        self.words_per_row = -(-geometry.width // config.word_bits)
        self.region_words = self.rows_per_bank * self.words_per_row
        self.banks = np.zeros(
            (config.n_banks, n_slots * 2 * self.region_words), dtype=np.uint16
        )

    def words_per_bank(self) -> int:
        return self.banks.shape[1]

    def total_bits(self) -> int:
        """Pixel bits stored: 2 planes x slots x W x H."""
        return 2 * self.n_slots * self.geometry.pixels

    def physical_bits(self) -> int:
        """Bits including row/word padding of the bank arrays."""
        return self.banks.size * self.config.word_bits

    def locate(self, slot: int, polarity: int, x: int, y: int) -> tuple[int, int, int]:
        return bank_locate(self.geometry, self.config, slot, polarity, x, y)

    def set_bit(self, slot: int, polarity: int, x: int, y: int) -> None:
        bank, address, bit = self.locate(slot, polarity, x, y)
        self.banks[bank, address] |= np.uint16(1 << bit)

    def get_bit(self, slot: int, polarity: int, x: int, y: int) -> int:
        bank, address, bit = self.locate(slot, polarity, x, y)
        return int(self.banks[bank, address] >> bit) & 1

    def clear_slot(self, slot: int) -> None:
        start = (slot - 1) * 2 * self.region_words
        self.banks[:, start : start + 2 * self.region_words] = 0


def bank_locate(
    geometry: SensorGeometry,
    bank_cfg: BankConfig,
    slot: int,
    polarity: int,
    x: int,
    y: int,
) -> tuple[int, int, int]:
    """Return ``(bank, word_address, bit_offset)`` of pixel (x, y) in a slot plane."""
    rows_per_bank = -(-geometry.height // bank_cfg.n_banks)
    words_per_row = -(-geometry.width // bank_cfg.word_bits)
    region = ((slot - 1) * 2 + _plane(polarity)) * rows_per_bank * words_per_row
    bank = y % bank_cfg.n_banks
    address = region + (y // bank_cfg.n_banks) * words_per_row + x // bank_cfg.word_bits
    return bank, address, x % bank_cfg.word_bits


@dataclass
class PatchFetch:
    """Words read for one patch plane, one row of words per patch row (dy order)."""

    banks: np.ndarray
    words: np.ndarray
    first_word: int
    cycles_used: int
    bits_fetched: int
    bits_used: int


def fetch_patch_words(
    memory: BankedMemory, slot: int, polarity: int, x_c: int, y_c: int, n: int
) -> PatchFetch:
    """
    Read the words covering an n x n patch from ``n`` banks in parallel.

    Every bank serves one patch row, so the cycle count is the number of words the
    column span [x_c - r, x_c + r] touches. Words outside the frame are read as zero.
    """
    _check_patch_size(n)
    cfg = memory.config
    if n > cfg.n_banks:
        raise EbbiConfigError(
            f"Patch size {n} needs at least {n} banks, memory has {cfg.n_banks}"
        )
    r = n // 2
    first_word = (x_c - r) // cfg.word_bits
    last_word = (x_c + r) // cfg.word_bits
    cycles = last_word - first_word + 1

    rows = np.arange(y_c - r, y_c + r + 1)
    word_idx = np.arange(first_word, last_word + 1)
    banks = rows % cfg.n_banks
    region = ((slot - 1) * 2 + _plane(polarity)) * memory.region_words
    addresses = (
        region
        + (rows // cfg.n_banks)[:, None] * memory.words_per_row
        + word_idx[None, :]
    )
    valid = (
        ((rows >= 0) & (rows < memory.geometry.height))[:, None]
        & ((word_idx >= 0) & (word_idx < memory.words_per_row))[None, :]
    )
    words = np.zeros((n, cycles), dtype=np.uint16)
    words[valid] = memory.banks[np.broadcast_to(banks[:, None], valid.shape)[valid], addresses[valid]]
    return PatchFetch(
        banks=banks,
        words=words,
        first_word=first_word,
        cycles_used=int(cycles),
        bits_fetched=int(cycles * cfg.n_banks * cfg.word_bits),
        bits_used=n * n,
    )


def patch_from_words(fetch: PatchFetch, x_c: int, n: int, word_bits: int) -> np.ndarray:
    """Select the n x n patch bits from fetched words; result indexed [dx, dy]."""
    r = n // 2
    shifts = np.arange(word_bits, dtype=np.uint16)
    bits = ((fetch.words[:, :, None] >> shifts) & 1).reshape(n, -1)
    offset = (x_c - r) - fetch.first_word * word_bits
    rows = bits[:, offset : offset + n]
    return rows.T.astype(np.uint8)


def alignment_cycles(n: int, word_bits: int) -> list[int]:
    """Patch fetch cycles for every column alignment modulo ``word_bits``."""
    _check_patch_size(n)
    r = n // 2
    cycles = []
    for start in range(word_bits):
        x_c = start + r + word_bits
        cycles.append((x_c + r) // word_bits - (x_c - r) // word_bits + 1)
    return cycles


@dataclass
class EbbiStack:
    geometry: SensorGeometry
    n_ebbi: int
    trigger: EbbiTrigger
    images: np.ndarray
    ptr_active: int
    ptr_clear: int
    event_count: int = 0
    t_start: int | None = None
    transitions: int = 0
    memory: BankedMemory | None = field(default=None, repr=False)

    @property
    def n_slots(self) -> int:
        return self.n_ebbi + 1

    def slot_image(self, slot: int, polarity: int) -> np.ndarray:
        return self.images[slot - 1, _plane(polarity)]

    def processing_slots(self) -> list[int]:
        """The N_EBBI non-cleared slots, oldest first, active slot last."""
        return [
            (self.ptr_active - 1 + k) % self.n_slots + 1
            for k in range(self.n_ebbi - 1, -1, -1)
        ]


def stack_init(
    geometry: SensorGeometry,
    n_ebbi: int,
    trigger: EbbiTrigger,
    bank_config: BankConfig | None = None,
) -> EbbiStack:
    if n_ebbi < 1:
        raise EbbiConfigError(f"N_EBBI must be >= 1, got {n_ebbi}")
    images = np.zeros((n_ebbi + 1, 2, geometry.height, geometry.width), dtype=np.uint8)
    memory = BankedMemory(geometry, n_ebbi + 1, bank_config) if bank_config else None
    stack = EbbiStack(
        geometry=geometry,
        n_ebbi=n_ebbi,
        trigger=trigger,
        images=images,
        ptr_active=1,
        ptr_clear=n_ebbi + 1,
        memory=memory,
    )
    out.log_only(
        f"EBBI stack init: {geometry}, N_EBBI={n_ebbi}, trigger={trigger.mode.value}:{trigger.value}"
        + (f", banks={bank_config.n_banks}x{bank_config.word_bits}b" if bank_config else ""),
        level="debug",
    )
    return stack


def stack_process_event(stack: EbbiStack, e: Event) -> bool:
    """Set the event's bit in the active pair, then close the window if due."""
    if not stack.geometry.contains(e.x, e.y):
        raise EventValidationError(f"Event ({e.x}, {e.y}) outside {stack.geometry}")
    if stack.t_start is None:
        stack.t_start = e.t

    plane = _plane(e.p)
    stack.images[stack.ptr_active - 1, plane, e.y, e.x] = 1
    if stack.memory is not None:
        stack.memory.set_bit(stack.ptr_active, e.p, e.x, e.y)
    stack.event_count += 1

    if stack.trigger.mode == TriggerMode.FIXED_TIME:
        due = e.t - stack.t_start >= stack.trigger.value
    else:
        due = stack.event_count >= stack.trigger.value
    if not due:
        return False

    stack.ptr_active = stack.ptr_clear
    stack.ptr_clear = (stack.ptr_clear - 1) % stack.n_slots
    if stack.ptr_clear == 0:
        stack.ptr_clear = stack.n_slots
    stack.images[stack.ptr_clear - 1] = 0
    if stack.memory is not None:
        stack.memory.clear_slot(stack.ptr_clear)
    stack.event_count = 0
    stack.t_start = e.t
    stack.transitions += 1
    return True


def extract_patch(image: np.ndarray, x_c: int, y_c: int, n: int) -> np.ndarray:
    """n x n patch indexed ``P[dx + r, dy + r]``; out-of-frame pixels are zero."""
    _check_patch_size(n)
    height, width = image.shape
    r = n // 2
    patch = np.zeros((n, n), dtype=np.uint8)
    x0, x1 = max(x_c - r, 0), min(x_c + r + 1, width)
    y0, y1 = max(y_c - r, 0), min(y_c + r + 1, height)
    if x0 < x1 and y0 < y1:
        patch[x0 - x_c + r : x1 - x_c + r, y0 - y_c + r : y1 - y_c + r] = image[y0:y1, x0:x1].T
    return patch


def extract_sequence(
    stack: EbbiStack, memory: BankedMemory | None, e: Event, n: int
) -> PatchSequence:
    """
    Feature sequence for event ``e``: one 2n^2 vector per processed pair, oldest
    first. With ``memory`` the bits come from the banked words, otherwise from the
    plain image arrays.
    """
    _check_patch_size(n)
    slots = stack.processing_slots()
    if memory is not None:
        seq = np.zeros((stack.n_ebbi, 2, n, n), dtype=np.uint8)
        for k, slot in enumerate(slots):
            for plane, polarity in enumerate((Polarity.POSITIVE, Polarity.NEGATIVE)):
                fetch = fetch_patch_words(memory, slot, polarity, e.x, e.y, n)
                seq[k, plane] = patch_from_words(fetch, e.x, n, memory.config.word_bits)
        return seq.reshape(stack.n_ebbi, 2 * n * n)

    height, width = stack.geometry.height, stack.geometry.width
    r = n // 2
    x0, x1 = max(e.x - r, 0), min(e.x + r + 1, width)
    y0, y1 = max(e.y - r, 0), min(e.y + r + 1, height)
    seq = np.zeros((stack.n_ebbi, 2, n, n), dtype=np.uint8)
    block = stack.images[np.asarray(slots) - 1, :, y0:y1, x0:x1]
    seq[:, :, x0 - e.x + r : x1 - e.x + r, y0 - e.y + r : y1 - e.y + r] = block.transpose(
        0, 1, 3, 2
    )
    return seq.reshape(stack.n_ebbi, 2 * n * n)


def dump_pbm(stack: EbbiStack, slot: int, polarity: int, path) -> None:
    """Write one slot plane as an ASCII portable bitmap (P1)."""
    path = Path(path)
    image = stack.slot_image(slot, polarity)
    with path.open("w", encoding="ascii") as handle:
        handle.write(f"P1\n{stack.geometry.width} {stack.geometry.height}\n")
        np.savetxt(handle, image, fmt="%d", delimiter=" ")
    out.log_only(f"Dumped slot {slot} plane {_plane(polarity)} to {path}", level="debug")


@dataclass(frozen=True)
class StackConfig:
    n_ebbi: int = 2
    trigger: EbbiTrigger = field(default_factory=lambda: EbbiTrigger.fixed_time(25_000))
    patch_size: int = 5
    banks: BankConfig | None = None

    def __post_init__(self):
        if self.n_ebbi < 1:
            raise EbbiConfigError(f"N_EBBI must be >= 1, got {self.n_ebbi}")
        _check_patch_size(self.patch_size)

    @property
    def feature_dim(self) -> int:
        return 2 * self.patch_size * self.patch_size


def replay_sequences(stream, cfg: StackConfig, use_banks: bool = False) -> np.ndarray:
    """
    Replay ``stream`` through a fresh stack and return one PatchSequence per event,
    shape (len(stream), N_EBBI, 2n^2).

    Features are read before the event itself is written, so an event never
    supports its own classification.
    """
    stack = stack_init(stream.geometry, cfg.n_ebbi, cfg.trigger, cfg.banks)
    memory = stack.memory if use_banks else None
    sequences = np.zeros((len(stream), cfg.n_ebbi, cfg.feature_dim), dtype=np.uint8)
    columns = zip(stream.x.tolist(), stream.y.tolist(), stream.t.tolist(), stream.p.tolist())
    for i, (x, y, t, p) in enumerate(columns):
        event = Event(x, y, t, p)
        sequences[i] = extract_sequence(stack, memory, event, cfg.patch_size)
        stack_process_event(stack, event)
    out.log_only(
        f"Replayed {len(stream)} events through {stack.transitions} EBBI transitions"
    )
    return sequences
