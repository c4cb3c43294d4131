"""
Analytic cost and timing model of the SNNF pipeline and the baseline filters.

Energy figures come from operation counts times a configurable cost table. The
shipped costs are placeholders of the right order of magnitude, not measurements.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

from components.dvs_events import SensorGeometry
from components.ebbi_stack import BankConfig, alignment_cycles
from utils.output import Output

out = Output(__name__)

SAE_WORD_BITS = 32
ONF_WORD_BITS = 32
SWEEP_GEOMETRIES = (
    SensorGeometry(240, 180),
    SensorGeometry(346, 260),
    SensorGeometry(640, 480),
    SensorGeometry(1280, 960),
)


class UnknownFilterError(ValueError):
    """Filter name outside snnf/baf/stcf/onf."""


class FilterKind(str, Enum):
    SNNF = "snnf"
    BAF = "baf"
    STCF = "stcf"
    ONF = "onf"

    @classmethod
    def parse(cls, name) -> "FilterKind":
        try:
            return cls(str(getattr(name, "value", name)).lower())
        except ValueError:
            raise UnknownFilterError(
                f"Unknown filter '{name}', expected one of {[f.value for f in cls]}"
            ) from None


class PipelineMode(str, Enum):
    PIPELINED = "pipelined"
    SERIAL = "serial"


@dataclass(frozen=True)
class PipelineConfig:
    """Stage cycles: address 1, patch fetch 2, FCSNN N_EBBI+3, compare 1."""

    n_ebbi: int = 2
    mode: PipelineMode = PipelineMode.PIPELINED
    serial_cycles: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", PipelineMode(self.mode))
        if self.n_ebbi < 1:
            raise ValueError(f"n_ebbi must be >= 1, got {self.n_ebbi}")
        latency = latency_cycles(self)
        if self.serial_cycles is not None and self.serial_cycles not in (latency, latency + 1):
            raise ValueError(
                f"serial_cycles must be {latency} (ASIC) or {latency + 1} (FPGA), "
                f"got {self.serial_cycles}"
            )

    @property
    def stage_cycles(self) -> dict[str, int]:
        return {"addr": 1, "patch": 2, "fcsnn": self.n_ebbi + 3, "compare": 1}


@dataclass(frozen=True)
class CostTable:
    """
    Energy per operation in pJ. Reads and writes are per bit, scaled by log2(rows).
    ``multiply_pj`` only prices the multiply-accumulate comparison; no filter multiplies.
    """

    read_pj_per_bit: float = 0.02
    write_pj_per_bit: float = 0.03
    add_pj: float = 0.03
    multiply_pj: float = 0.2
    compare_pj: float = 0.03

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ValueError(f"Cost {name} must be >= 0, got {value}")

    def read(self, bits: int, rows: int) -> float:
        return self.read_pj_per_bit * bits * _row_factor(rows)

    def write(self, bits: int, rows: int) -> float:
        return self.write_pj_per_bit * bits * _row_factor(rows)


def _row_factor(rows: int) -> float:
    return max(1.0, math.log2(max(rows, 1)))


@dataclass(frozen=True)
class PowerSpec:
    dynamic_power_mw: float = 65.24
    clock_hz: float = 400e6
    leakage_mw: float = 0.012

    def __post_init__(self):
        if self.dynamic_power_mw < 0 or self.leakage_mw < 0:
            raise ValueError("Power figures must be >= 0")
        if self.clock_hz <= 0:
            raise ValueError("clock_hz must be > 0")


@dataclass(frozen=True)
class SnnfDims:
    """Network and memory shape the SNNF energy and memory figures depend on."""

    n_ebbi: int = 2
    patch_size: int = 5
    n_hidden: int = 30
    banks: BankConfig = field(default_factory=BankConfig)
    read_accounting: str = "per_bank_cycle"

    def __post_init__(self):
        if self.read_accounting not in ("per_bank_cycle", "per_plane"):
            raise ValueError(f"Unknown read accounting: {self.read_accounting}")


def latency_cycles(cfg: PipelineConfig) -> int:
    return 1 + 2 + (cfg.n_ebbi + 3) + 1


def throughput_meps(cfg: PipelineConfig, f_clk_hz: float) -> float:
    if f_clk_hz <= 0:
        raise ValueError("f_clk_hz must be > 0")
    if cfg.mode == PipelineMode.PIPELINED:
        return f_clk_hz / 1e6
    cycles = cfg.serial_cycles if cfg.serial_cycles is not None else latency_cycles(cfg)
    return f_clk_hz / cycles / 1e6


def memory_bits(geometry: SensorGeometry, n_ebbi: int) -> int:
    return 2 * (n_ebbi + 1) * geometry.width * geometry.height


def filter_memory_bits(filter, geometry: SensorGeometry, n_ebbi: int = 2) -> int:
    kind = FilterKind.parse(filter)
    if kind == FilterKind.SNNF:
        return memory_bits(geometry, n_ebbi)
    if kind == FilterKind.ONF:
        # two words per row and two per column
        return 2 * ONF_WORD_BITS * (geometry.width + geometry.height)
    return SAE_WORD_BITS * geometry.pixels


def patch_fetch_cycles(n: int, word_bits: int) -> tuple[int, int]:
    """(best, worst) fetch cycles over all column alignments."""
    cycles = alignment_cycles(n, word_bits)
    return min(cycles), max(cycles)


def speedup_vs_serial(n: int, word_bits: int) -> float:
    """Patch read speedup over one-pixel-per-cycle access."""
    return n * n / patch_fetch_cycles(n, word_bits)[1]


def snnf_reads_per_event(dims: SnnfDims) -> int:
    worst = patch_fetch_cycles(dims.patch_size, dims.banks.word_bits)[1]
    reads = worst * dims.banks.n_banks
    if dims.read_accounting == "per_plane":
        reads *= 2 * dims.n_ebbi
    return reads


def snnf_synaptic_ops(dims: SnnfDims) -> int:
    """Hidden-layer accumulations over N_EBBI steps plus the readout sum."""
    inputs = 2 * dims.patch_size * dims.patch_size
    return inputs * dims.n_hidden * dims.n_ebbi + dims.n_hidden


def multiplier_saving_pj(costs: CostTable, dims: SnnfDims | None = None) -> float:
    """
    Energy per event a multiply-accumulate datapath would spend on top of the
    accumulate-only SNNF: binary spikes and binary EBBI inputs turn every synaptic
    multiply into a gated add.
    """
    return snnf_synaptic_ops(dims or SnnfDims()) * costs.multiply_pj


def energy_per_event_pj(
    filter, geometry: SensorGeometry, costs: CostTable, dims: SnnfDims | None = None
) -> float:
    kind = FilterKind.parse(filter)
    dims = dims or SnnfDims()

    if kind == FilterKind.SNNF:
        slots = dims.n_ebbi + 1
        rows_per_bank = -(-geometry.height // dims.banks.n_banks)
        words_per_row = -(-geometry.width // dims.banks.word_bits)
        bank_rows = slots * 2 * rows_per_bank * words_per_row
        reads = snnf_reads_per_event(dims) * costs.read(dims.banks.word_bits, bank_rows)
        adds = snnf_synaptic_ops(dims)
        compares = dims.n_hidden * dims.n_ebbi + 1
        return reads + adds * costs.add_pj + compares * costs.compare_pj

    if kind == FilterKind.ONF:
        rows = 2 * (geometry.width + geometry.height)
        return (
            4 * costs.read(ONF_WORD_BITS, rows)
            + 2 * costs.write(ONF_WORD_BITS, rows)
            + 4 * costs.add_pj
            + 8 * costs.compare_pj
        )

    rows = geometry.pixels
    energy = 8 * costs.read(SAE_WORD_BITS, rows) + costs.write(SAE_WORD_BITS, rows)
    energy += 8 * costs.add_pj + 8 * costs.compare_pj
    if kind == FilterKind.STCF:
        # support counter and the final k comparison
        energy += 8 * costs.add_pj + costs.compare_pj
    return energy


def energy_per_event_nj(spec: PowerSpec, cycles_per_event: int) -> float:
    """E = P / f_sys * N."""
    return spec.dynamic_power_mw * 1e-3 / spec.clock_hz * cycles_per_event * 1e9


def power_total_mw(spec: PowerSpec, cycles_per_event: int, event_rate_hz: float) -> float:
    if event_rate_hz < 0:
        raise ValueError("event_rate_hz must be >= 0")
    energy_j = energy_per_event_nj(spec, cycles_per_event) * 1e-9
    return energy_j * event_rate_hz * 1e3 + spec.leakage_mw


def geometry_sweep(
    costs: CostTable,
    dims: SnnfDims | None = None,
    geometries=SWEEP_GEOMETRIES,
) -> list[dict]:
    """Memory and energy per filter for each geometry, one row per (geometry, filter)."""
    dims = dims or SnnfDims()
    rows = []
    for geometry in geometries:
        for kind in FilterKind:
            bits = filter_memory_bits(kind, geometry, dims.n_ebbi)
            rows.append(
                {
                    "geometry": str(geometry),
                    "filter": kind.value,
                    "memory_bits": bits,
                    "memory_bytes": bits // 8,
                    "memory_kb": bits / 8 / 1000,
                    "energy_pj_per_event": energy_per_event_pj(kind, geometry, costs, dims),
                }
            )
    out.log_only(f"Geometry sweep: {len(rows)} rows")
    return rows


def hardware_report(
    geometry: SensorGeometry,
    pipeline: PipelineConfig,
    power: PowerSpec,
    costs: CostTable,
    dims: SnnfDims | None = None,
    event_rate_hz: float = 1e6,
) -> dict:
    dims = dims or SnnfDims(n_ebbi=pipeline.n_ebbi)
    latency = latency_cycles(pipeline)
    serial = PipelineConfig(pipeline.n_ebbi, PipelineMode.SERIAL, pipeline.serial_cycles)
    best, worst = patch_fetch_cycles(dims.patch_size, dims.banks.word_bits)
    bits = memory_bits(geometry, pipeline.n_ebbi)
    return {
        "geometry": str(geometry),
        "memory_bits": bits,
        "memory_bytes": bits // 8,
        "latency_cycles": latency,
        "throughput_meps": throughput_meps(pipeline, power.clock_hz),
        "serial_throughput_meps": throughput_meps(serial, power.clock_hz),
        "patch_fetch_cycles": {"best": best, "worst": worst},
        "patch_speedup_vs_serial": speedup_vs_serial(dims.patch_size, dims.banks.word_bits),
        "snnf_reads_per_event": snnf_reads_per_event(dims),
        "energy_pj_per_event": {
            kind.value: energy_per_event_pj(kind, geometry, costs, dims) for kind in FilterKind
        },
        "snnf_multiplier_saving_pj_per_event": multiplier_saving_pj(costs, dims),
        "energy_nj_per_event": energy_per_event_nj(power, latency),
        "power_total_mw": power_total_mw(power, latency, event_rate_hz),
        "event_rate_hz": event_rate_hz,
    }
