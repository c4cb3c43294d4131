"""
Command workflows behind the ``snnf-denoise`` subcommands.

Each ``cmd_*`` reads its parameters from ``utils.snnf_config`` (already loaded with
the command-line overrides), writes its artifacts, and echoes the settings into
``run_config.yml`` last, so a present run config means a complete run.
"""

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from components.baseline_filters import default_tau_grid, roc_by_tau
from components.dvs_events import (
    EventStream,
    Label,
    merge_streams,
    read_events,
    relabel,
    write_events,
)
from components.ebbi_stack import replay_sequences
from components.eval_metrics import (
    confusion,
    roc_from_scores,
    write_roc_csv,
    write_summary_json,
)
from components.hw_model import geometry_sweep, hardware_report
from components.noise_synth import (
    LeakNoiseConfig,
    MovingEdgeConfig,
    ShotNoiseConfig,
    gen_leak_noise,
    gen_moving_edge,
    gen_shot_noise,
    generator_metadata,
    matched_shot_rate,
)
from components.snn_engine import QuantizedFcsnn, classify_batch, load_network, save_network
from components.snn_trainer import (
    DatasetError,
    FloatFcsnn,
    SampleSet,
    agreement,
    build_dataset,
    chronological_split,
    float_scores,
    quantize,
    save_float_checkpoint,
    sweep_threshold,
    train,
)
from utils import snnf_config as settings
from utils.output import Output
from utils.run_config import write_run_config

MODEL_NAME = "model.snnf"
FLOAT_CHECKPOINT_NAME = "model.snnf.f32"
_SCORE_CHUNK = 16384


def _suffix(fmt: str) -> str:
    return ".csv" if fmt == "csv" else ".evt"


def _write_with_meta(stream: EventStream, path: Path, fmt: str, meta: dict) -> None:
    write_events(stream, path, fmt)
    meta_path = path.with_name(path.name + ".meta.yml")
    with meta_path.open("w", encoding="utf-8") as handle:
        yaml.safe_dump({**meta, "events": len(stream)}, handle, sort_keys=False)


def cmd_synth(output_dir) -> dict[str, Path]:
    """Generate the moving-edge signal, its noise streams and their labeled mix."""
    out = Output(__name__)
    output_dir = Path(output_dir)
    cfg = settings.synth
    geometry = settings.geometry
    out.header("Synthetic streams", f"{geometry}, {cfg.duration_us} us, seed {cfg.seed}")

    edge_cfg = MovingEdgeConfig(
        speed=cfg.edge_speed,
        orientation=cfg.edge_orientation,
        event_rate_per_crossing=cfg.edge_events_per_crossing,
        bar_width=cfg.bar_width,
        seed=cfg.seed,
    )
    signal = gen_moving_edge(geometry, cfg.duration_us, edge_cfg)
    shot_rate = cfg.shot_rate_hz
    if shot_rate is None:
        shot_rate = matched_shot_rate(len(signal), geometry, cfg.duration_us)
    shot_cfg = ShotNoiseConfig(rate_hz=shot_rate, seed=cfg.seed + 1)
    leak_cfg = LeakNoiseConfig(
        mean_rate_hz=cfg.leak_rate_hz, dispersion=cfg.leak_dispersion, seed=cfg.seed + 2
    )

    with ThreadPoolExecutor(max_workers=2) as pool:
        shot_future = pool.submit(gen_shot_noise, geometry, cfg.duration_us, shot_cfg)
        leak_future = pool.submit(gen_leak_noise, geometry, cfg.duration_us, leak_cfg)
        shot, leak = shot_future.result(), leak_future.result()

    mixed = merge_streams(merge_streams(signal, shot), leak)
    suffix = _suffix(cfg.format)
    outputs = {
        "signal": output_dir / f"signal{suffix}",
        "shot_noise": output_dir / f"shot_noise{suffix}",
        "leak_noise": output_dir / f"leak_noise{suffix}",
        "mixed": output_dir / f"mixed{suffix}",
    }
    output_dir.mkdir(parents=True, exist_ok=True)
    _write_with_meta(
        signal, outputs["signal"], cfg.format,
        generator_metadata("moving_edge", geometry, cfg.duration_us, edge_cfg),
    )
    _write_with_meta(
        shot, outputs["shot_noise"], cfg.format,
        generator_metadata("shot_noise", geometry, cfg.duration_us, shot_cfg),
    )
    _write_with_meta(
        leak, outputs["leak_noise"], cfg.format,
        generator_metadata("leak_noise", geometry, cfg.duration_us, leak_cfg),
    )
    _write_with_meta(
        mixed, outputs["mixed"], cfg.format,
        {"generator": "mix", "sources": ["moving_edge", "shot_noise", "leak_noise"]},
    )

    out.table(
        ["Stream", "Events", "File"],
        [[name, n, outputs[name].name] for name, n in (
            ("signal", len(signal)), ("shot_noise", len(shot)),
            ("leak_noise", len(leak)), ("mixed", len(mixed)),
        )],
    )
    write_run_config(output_dir, "synth", {"output_dir": output_dir})
    out.success(f"Synthetic streams written to {output_dir}")
    return outputs


def cmd_mix(signal_path, noise_path, output_path, relabel_inputs: bool = True) -> Path:
    """Merge a signal file and a noise file into one labeled stream."""
    out = Output(__name__)
    out.header("Mix streams")
    signal = read_events(signal_path)
    noise = read_events(noise_path)
    if relabel_inputs:
        signal = relabel(signal, Label.SIGNAL)
        noise = relabel(noise, Label.NOISE)
    mixed = merge_streams(signal, noise)
    output_path = Path(output_path)
    write_events(mixed, output_path)
    write_run_config(
        output_path.parent,
        "mix",
        {"signal": signal_path, "noise": noise_path, "output": output_path,
         "relabel": relabel_inputs},
    )
    out.success(f"{len(signal)} signal + {len(noise)} noise events → {output_path}")
    return output_path


def _float_test_auc(net: FloatFcsnn, test: SampleSet) -> float:
    n_signal, n_noise = test.class_counts()
    if n_signal == 0 or n_noise == 0:
        return math.nan
    return roc_from_scores(float_scores(net, test), test.labels).auc


def cmd_train(input_path, output_dir) -> dict:
    """Replay, train, quantize and report the test AUC of the quantized network."""
    out = Output(__name__)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    cfg = settings.training
    out.header("Train SNNF", f"Input: {input_path}")

    stream = read_events(input_path)
    out.step(f"Replaying {len(stream)} events through the EBBI stack...")
    samples = build_dataset(stream, settings.stack, use_banks=settings.USE_BANKS)
    train_set, test_set = chronological_split(samples, cfg.train_fraction)
    out.detail(f"train={len(train_set)} test={len(test_set)}")

    log_path = output_dir / "training_log.csv"
    with log_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "train_loss", "test_auc"])

        def on_epoch(epoch: int, loss: float, net: FloatFcsnn) -> None:
            test_auc = _float_test_auc(net, test_set)
            writer.writerow([epoch, f"{loss:.6f}", f"{test_auc:.6f}"])
            out.detail(f"epoch {epoch}: loss={loss:.5f} test_auc={test_auc:.4f}")

        out.step(f"Training {cfg.n_hidden} hidden neurons for {cfg.epochs} epochs...")
        float_net = train(train_set, cfg, on_epoch=on_epoch)

    qnet = quantize(float_net)
    save_network(qnet, output_dir / MODEL_NAME)
    save_float_checkpoint(float_net, output_dir / FLOAT_CHECKPOINT_NAME)

    curve = sweep_threshold(qnet, test_set)
    write_roc_csv(curve, output_dir / "roc.csv")
    agree = agreement(float_net, qnet, test_set)
    write_summary_json(
        output_dir / "summary.json",
        curve.auc,
        filter="snnf",
        train_samples=len(train_set),
        test_samples=len(test_set),
        test_t_start_us=int(test_set.timestamps[0]) if len(test_set) else None,
        float_quantized_agreement=agree,
        v_th=qnet.v_th,
        beta_shift=qnet.beta_shift,
    )
    write_run_config(output_dir, "train", {"input": input_path, "output_dir": output_dir})
    out.success(f"Test AUC (quantized) = {curve.auc:.4f}, float/int agreement = {agree:.4f}")
    return {"auc": curve.auc, "model": output_dir / MODEL_NAME}


def _load_model(model_path) -> QuantizedFcsnn:
    net = load_network(model_path)
    if net.input_dim != settings.stack.feature_dim:
        raise ValueError(
            f"Model expects {net.input_dim} inputs, patch size {settings.PATCH_SIZE} gives "
            f"{settings.stack.feature_dim}"
        )
    return net


def _snnf_scores(stream: EventStream, model_path) -> np.ndarray:
    """Integer scores of every event from one replay; labels are not consulted."""
    net = _load_model(model_path)
    sequences = replay_sequences(stream, settings.stack, use_banks=settings.USE_BANKS)
    scores = np.zeros(len(stream), dtype=np.int32)
    for start in range(0, len(stream), _SCORE_CHUNK):
        chunk = slice(start, start + _SCORE_CHUNK)
        scores[chunk] = classify_batch(net, sequences[chunk])[1]
    return scores


def _scoring_window(stream: EventStream, t_min_us: int) -> np.ndarray:
    select = stream.t >= np.uint64(t_min_us)
    if not select.any():
        raise ValueError(f"No events at or after t_min_us={t_min_us}")
    return select


def cmd_eval(input_path, output_dir, filter: str | None = None, model_path=None) -> dict:
    """
    ROC/AUC of one filter on a labeled file. Every filter replays the whole stream;
    only events at or after ``eval.t_min_us`` are scored, so a model trained on the
    first part of a recording can be compared with the baselines on its test split.
    """
    out = Output(__name__)
    output_dir = Path(output_dir)
    cfg = settings.evaluation
    filter = (filter or cfg.filter).lower()
    out.header(f"Evaluate {filter.upper()}", f"Input: {input_path}")
    stream = read_events(input_path)
    if not stream.is_fully_labeled():
        raise DatasetError("eval needs every event labeled signal or noise")
    select = _scoring_window(stream, cfg.t_min_us)
    if cfg.t_min_us:
        out.detail(f"Scoring {int(select.sum())} of {len(stream)} events (t >= {cfg.t_min_us} us)")

    if filter == "snnf":
        if model_path is None:
            raise ValueError("eval --filter snnf needs --model")
        scores = _snnf_scores(stream, model_path)[select]
        labels = stream.label[select]
        curve = roc_from_scores(scores, labels)
        counts = confusion(scores >= cfg.theta, labels)
        extra = {"theta": cfg.theta}
    else:
        taus = default_tau_grid(cfg.tau_min_us, cfg.tau_max_us, cfg.tau_steps)
        out.step(f"Sweeping tau over {len(taus)} values in [{taus[0]:.0f}, {taus[-1]:.0f}] us...")
        curve = roc_by_tau(
            filter,
            stream,
            taus,
            k=cfg.k,
            polarity_split=cfg.polarity_split,
            method=cfg.method,
            select=select,
        )
        counts = None
        extra = {"k": cfg.k} if filter == "stcf" else {}

    write_roc_csv(curve, output_dir / "roc.csv")
    write_summary_json(
        output_dir / "summary.json",
        curve.auc,
        counts,
        filter=filter,
        events=len(stream),
        scored_events=int(select.sum()),
        t_min_us=cfg.t_min_us,
        **extra,
    )
    write_run_config(
        output_dir, "eval", {"input": input_path, "filter": filter, "model": model_path}
    )
    out.success(f"{filter.upper()} AUC = {curve.auc:.4f}")
    return {"auc": curve.auc, "curve": curve, "counts": counts}


def cmd_filter(input_path, output_path, model_path, theta: float | None = None) -> dict:
    """Keep the events the quantized network scores at or above ``theta``."""
    out = Output(__name__)
    theta = settings.evaluation.theta if theta is None else theta
    out.header("Filter events", f"Input: {input_path}, theta={theta}")
    stream = read_events(input_path)
    scores = _snnf_scores(stream, model_path)
    keep = scores >= theta
    filtered = EventStream(stream.geometry, stream.events[keep])
    output_path = Path(output_path)
    write_events(filtered, output_path)
    write_run_config(
        output_path.parent,
        "filter",
        {"input": input_path, "output": output_path, "model": model_path, "theta": theta},
    )
    out.success(f"Kept {int(keep.sum())} of {len(stream)} events → {output_path}")
    return {"kept": int(keep.sum()), "dropped": int((~keep).sum()), "mask": keep}


def cmd_hwreport(output_dir) -> dict:
    """Hardware model report (JSON) and geometry sweep (CSV)."""
    out = Output(__name__)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    out.header("Hardware report", f"{settings.geometry}, N_EBBI={settings.N_EBBI}")

    report = hardware_report(
        settings.geometry,
        settings.pipeline,
        settings.power,
        settings.costs,
        settings.dims,
        event_rate_hz=settings.EVENT_RATE_HZ,
    )
    with (output_dir / "hwreport.json").open("w", encoding="utf-8") as handle:
        json.dump(report, handle, indent=2)
        handle.write("\n")

    rows = geometry_sweep(settings.costs, settings.dims)
    with (output_dir / "geometry_sweep.csv").open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)

    out.table(
        ["Metric", "Value"],
        [
            ["memory_bits", report["memory_bits"]],
            ["memory_bytes", report["memory_bytes"]],
            ["latency_cycles", report["latency_cycles"]],
            ["throughput_meps", report["throughput_meps"]],
            ["serial_throughput_meps", report["serial_throughput_meps"]],
            ["energy_nj_per_event", report["energy_nj_per_event"]],
            ["snnf_multiplier_saving_pj_per_event", report["snnf_multiplier_saving_pj_per_event"]],
            ["power_total_mw", report["power_total_mw"]],
        ],
    )
    write_run_config(output_dir, "hwreport", {"output_dir": output_dir})
    out.success(f"Hardware report written to {output_dir}")
    return report
