import pytest

from components.dvs_events import SensorGeometry
from components.ebbi_stack import BankConfig
from components.hw_model import (
    SWEEP_GEOMETRIES,
    CostTable,
    FilterKind,
    PipelineConfig,
    PipelineMode,
    PowerSpec,
    SnnfDims,
    UnknownFilterError,
    energy_per_event_nj,
    energy_per_event_pj,
    filter_memory_bits,
    geometry_sweep,
    hardware_report,
    latency_cycles,
    memory_bits,
    multiplier_saving_pj,
    patch_fetch_cycles,
    power_total_mw,
    snnf_reads_per_event,
    snnf_synaptic_ops,
    speedup_vs_serial,
    throughput_meps,
)

DAVIS346 = SensorGeometry(346, 260)


def test_memory_for_the_reference_sensor():
    assert memory_bits(DAVIS346, 2) == 539_760
    assert memory_bits(DAVIS346, 2) // 8 == 67_470


@pytest.mark.parametrize("n_ebbi, latency", [(1, 8), (2, 9), (6, 13)])
def test_latency(n_ebbi, latency):
    assert latency_cycles(PipelineConfig(n_ebbi=n_ebbi)) == latency


def test_throughput_by_mode():
    assert throughput_meps(PipelineConfig(), 400e6) == pytest.approx(400.0)
    serial = PipelineConfig(mode=PipelineMode.SERIAL)
    assert throughput_meps(serial, 400e6) == pytest.approx(44.44, abs=0.01)
    fpga = PipelineConfig(mode="serial", serial_cycles=10)
    assert throughput_meps(fpga, 400e6) == pytest.approx(40.0)
    assert throughput_meps(fpga, 100e6) == pytest.approx(10.0)


def test_serial_cycles_are_latency_or_one_more():
    with pytest.raises(ValueError):
        PipelineConfig(serial_cycles=11)
    with pytest.raises(ValueError):
        PipelineConfig(n_ebbi=0)


def test_energy_and_power_from_the_power_figure():
    spec = PowerSpec()
    assert energy_per_event_nj(spec, 9) == pytest.approx(1.468, abs=5e-4)
    assert power_total_mw(spec, 9, 1e6) == pytest.approx(1.48, abs=5e-3)
    assert power_total_mw(spec, 9, 0) == pytest.approx(0.012)
    with pytest.raises(ValueError):
        power_total_mw(spec, 9, -1)


def test_patch_fetch_and_speedup():
    assert patch_fetch_cycles(5, 4) == (2, 2)
    assert patch_fetch_cycles(5, 8) == (1, 2)
    assert speedup_vs_serial(5, 4) == 12.5


def test_reads_per_event():
    assert snnf_reads_per_event(SnnfDims()) == 10
    assert snnf_reads_per_event(SnnfDims(read_accounting="per_plane")) == 40
    assert snnf_reads_per_event(SnnfDims(banks=BankConfig(5, 2))) == 15
    with pytest.raises(ValueError):
        SnnfDims(read_accounting="per_pixel")


def test_filter_memory():
    assert filter_memory_bits("snnf", DAVIS346) == 539_760
    assert filter_memory_bits("baf", DAVIS346) == 32 * 346 * 260
    assert filter_memory_bits("stcf", DAVIS346) == 32 * 346 * 260
    assert filter_memory_bits("onf", DAVIS346) == 64 * (346 + 260)


def test_zero_costs_give_zero_energy():
    costs = CostTable(0, 0, 0, 0, 0)
    for kind in FilterKind:
        assert energy_per_event_pj(kind, DAVIS346, costs) == 0.0


def test_multiplier_saving():
    dims = SnnfDims()
    assert snnf_synaptic_ops(dims) == 50 * 30 * 2 + 30
    assert multiplier_saving_pj(CostTable(multiply_pj=0.2), dims) == pytest.approx(606.0)
    assert multiplier_saving_pj(CostTable(multiply_pj=0.0), dims) == 0.0
    # the accumulate-only filters never pay for a multiply
    for kind in FilterKind:
        assert energy_per_event_pj(kind, DAVIS346, CostTable(multiply_pj=0.0)) == pytest.approx(
            energy_per_event_pj(kind, DAVIS346, CostTable(multiply_pj=5.0))
        )


def test_energy_grows_with_resolution():
    costs = CostTable()
    for kind in FilterKind:
        energies = [energy_per_event_pj(kind, g, costs) for g in SWEEP_GEOMETRIES]
        assert energies == sorted(energies)
        assert energies[0] > 0
    # stcf does the baf work plus counting
    assert energy_per_event_pj("stcf", DAVIS346, costs) > energy_per_event_pj(
        "baf", DAVIS346, costs
    )


def test_unknown_filter():
    with pytest.raises(UnknownFilterError):
        FilterKind.parse("knn")
    with pytest.raises(UnknownFilterError):
        energy_per_event_pj("knn", DAVIS346, CostTable())
    assert FilterKind.parse("STCF") == FilterKind.STCF


def test_negative_cost_rejected():
    with pytest.raises(ValueError):
        CostTable(read_pj_per_bit=-1)


def test_geometry_sweep_rows():
    rows = geometry_sweep(CostTable())
    assert len(rows) == len(SWEEP_GEOMETRIES) * len(FilterKind)
    snnf = [row for row in rows if row["filter"] == "snnf"]
    assert [row["memory_bits"] for row in snnf] == sorted(row["memory_bits"] for row in snnf)
    davis = next(row for row in snnf if row["geometry"] == "346x260")
    assert davis["memory_bytes"] == 67_470
    assert davis["memory_kb"] == pytest.approx(67.47)


def test_hardware_report():
    report = hardware_report(DAVIS346, PipelineConfig(), PowerSpec(), CostTable())
    assert report["memory_bits"] == 539_760
    assert report["latency_cycles"] == 9
    assert report["throughput_meps"] == pytest.approx(400.0)
    assert report["serial_throughput_meps"] == pytest.approx(400 / 9)
    assert report["patch_fetch_cycles"] == {"best": 2, "worst": 2}
    assert report["snnf_reads_per_event"] == 10
    assert set(report["energy_pj_per_event"]) == {"snnf", "baf", "stcf", "onf"}
    assert report["snnf_multiplier_saving_pj_per_event"] == pytest.approx(606.0)
    assert report["power_total_mw"] == pytest.approx(1.48, abs=5e-3)
