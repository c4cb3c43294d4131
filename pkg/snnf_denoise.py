#!/usr/bin/env python3
"""
SNNF event-stream denoising: synthetic data, training, evaluation and hardware model

Usage:
    # Generate the synthetic benchmark (moving edge + matched shot noise):
    ./snnf_denoise.py synth -o out/synth
    ./snnf_denoise.py synth -o out/clean --shot-rate 0

    # Merge a signal recording and a noise recording into one labeled file:
    ./snnf_denoise.py mix signal.evt noise.evt -o mixed.evt

    # Train, quantize and report the test AUC:
    ./snnf_denoise.py train -i out/synth/mixed.evt -o out/model

    # ROC/AUC of a filter on a labeled file:
    ./snnf_denoise.py eval -i mixed.evt -o out/eval-snnf --filter snnf --model out/model/model.snnf
    ./snnf_denoise.py eval -i mixed.evt -o out/eval-stcf --filter stcf --k 4

    # Drop the events the network classifies as noise:
    ./snnf_denoise.py filter -i mixed.evt -o clean.evt --model out/model/model.snnf --theta 0

    # Hardware cost report and geometry sweep:
    ./snnf_denoise.py hwreport -o out/hw

    # Use a custom settings file, YAML or JSON (must come before the subcommand):
    ./snnf_denoise.py -f my_settings.json train -i mixed.evt -o out/model
"""

import argparse
import sys

from components.baseline_filters import BaselineFilter
from components.dvs_events import (
    EventOrderError,
    EventParseError,
    EventValidationError,
    GeometryMismatchError,
)
from components.ebbi_stack import EbbiConfigError
from components.eval_metrics import MetricsError
from components.hw_model import UnknownFilterError
from components.snn_engine import DimensionMismatchError, NetworkFileError
from components.snn_trainer import DatasetError
from components.snnf_workflows import (
    cmd_eval,
    cmd_filter,
    cmd_hwreport,
    cmd_mix,
    cmd_synth,
    cmd_train,
)
from utils import snnf_config as settings
from utils.logging import setup_logging
from utils.output import Output

# argparse destination → settings key
_OVERRIDES = {
    "width": "sensor.width",
    "height": "sensor.height",
    "n_ebbi": "ebbi.n_ebbi",
    "patch_size": "ebbi.patch_size",
    "t_e_us": "ebbi.t_e_us",
    "trigger": "ebbi.trigger",
    "n_e": "ebbi.n_e",
    "word_bits": "banks.word_bits",
    "n_banks": "banks.n_banks",
    "use_banks": "banks.use_banks",
    "n_hidden": "training.n_hidden",
    "epochs": "training.epochs",
    "learning_rate": "training.learning_rate",
    "batch_size": "training.batch_size",
    "train_seed": "training.seed",
    "optimizer": "training.optimizer",
    "duration_us": "synth.duration_us",
    "seed": "synth.seed",
    "shot_rate": "synth.shot_rate_hz",
    "leak_rate": "synth.leak_rate_hz",
    "leak_dispersion": "synth.leak_dispersion",
    "speed": "synth.edge_speed",
    "orientation": "synth.edge_orientation",
    "format": "synth.format",
    "filter": "eval.filter",
    "k": "eval.k",
    "tau_min": "eval.tau_min_us",
    "tau_max": "eval.tau_max_us",
    "tau_steps": "eval.tau_steps",
    "method": "eval.method",
    "polarity_split": "eval.polarity_split",
    "t_min_us": "eval.t_min_us",
    "clock_hz": "hardware.clock_hz",
    "mode": "hardware.mode",
    "serial_cycles": "hardware.serial_cycles",
    "event_rate": "hardware.event_rate_hz",
}

_HANDLED_ERRORS = (
    settings.ConfigError,
    EventParseError,
    EventValidationError,
    EventOrderError,
    GeometryMismatchError,
    EbbiConfigError,
    NetworkFileError,
    DimensionMismatchError,
    DatasetError,
    MetricsError,
    UnknownFilterError,
    FileNotFoundError,
    ValueError,
)


def _collect_overrides(args: argparse.Namespace) -> dict:
    overrides = {}
    for dest, key in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is None or value is False:
            continue
        overrides[key] = value
    return overrides


def _add_verbose(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        help="Enable verbose logging output",
    )


def _add_geometry_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--width", type=int, help="Sensor width in pixels")
    parser.add_argument("--height", type=int, help="Sensor height in pixels")


def _add_stack_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n-ebbi", type=int, help="EBBI pairs fed to the network")
    parser.add_argument("--patch-size", type=int, help="Patch size n (odd)")
    parser.add_argument(
        "--trigger", choices=["fixed_time", "fixed_count"], help="EBBI window trigger"
    )
    parser.add_argument("--t-e-us", type=int, help="Fixed-time window T_e in microseconds")
    parser.add_argument("--n-e", type=int, help="Fixed-count window N_e in events")
    parser.add_argument("--word-bits", type=int, help="Bank word width W_word")
    parser.add_argument("--n-banks", type=int, help="Number of memory banks N_mem")
    parser.add_argument(
        "--use-banks",
        action="store_true",
        help="Extract patches through the bit-packed banked memory",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="SNNF event-stream denoising toolkit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "-f",
        "--config-file",
        metavar="FILE",
        default=None,
        help=(
            "YAML or JSON settings layered over the defaults "
            f"(default: {settings.DEFAULT_VARIABLES_PATH})"
        ),
    )
    subparsers = parser.add_subparsers(dest="command")

    synth_parser = subparsers.add_parser("synth", help="Generate labeled synthetic streams")
    _add_verbose(synth_parser)
    synth_parser.add_argument("-o", "--output-dir", default="out/synth", help="Output directory")
    _add_geometry_flags(synth_parser)
    synth_parser.add_argument("--duration-us", type=int, help="Stream duration in microseconds")
    synth_parser.add_argument("--seed", type=int, help="Base PRNG seed")
    synth_parser.add_argument(
        "--shot-rate", type=float, help="Shot noise rate in Hz per pixel (default: matched 1:1)"
    )
    synth_parser.add_argument("--leak-rate", type=float, help="Mean leak noise rate in Hz per pixel")
    synth_parser.add_argument("--leak-dispersion", type=float, help="Log-normal sigma of leak rates")
    synth_parser.add_argument("--speed", type=float, help="Edge speed in pixels per second")
    synth_parser.add_argument(
        "--orientation", choices=["vertical", "horizontal"], help="Edge orientation"
    )
    synth_parser.add_argument("--format", choices=["packed", "csv"], help="Event file format")

    mix_parser = subparsers.add_parser("mix", help="Merge a signal file and a noise file")
    _add_verbose(mix_parser)
    mix_parser.add_argument("signal", help="Signal event file")
    mix_parser.add_argument("noise", help="Noise event file")
    mix_parser.add_argument("-o", "--output", required=True, help="Merged event file")
    mix_parser.add_argument(
        "--keep-labels",
        action="store_true",
        help="Keep the input labels instead of marking them signal and noise",
    )

    train_parser = subparsers.add_parser("train", help="Train and quantize the SNNF network")
    _add_verbose(train_parser)
    train_parser.add_argument("-i", "--input", required=True, help="Labeled event file")
    train_parser.add_argument("-o", "--output-dir", default="out/model", help="Output directory")
    _add_stack_flags(train_parser)
    train_parser.add_argument("--n-hidden", type=int, help="Hidden LIF neurons")
    train_parser.add_argument("--epochs", type=int, help="Training epochs")
    train_parser.add_argument("--learning-rate", type=float, help="Optimizer learning rate")
    train_parser.add_argument("--batch-size", type=int, help="Minibatch size")
    train_parser.add_argument("--train-seed", type=int, help="Initialization/shuffle seed")
    train_parser.add_argument("--optimizer", choices=["sgd", "adam"], help="Weight update rule")

    eval_parser = subparsers.add_parser("eval", help="ROC/AUC of a filter on a labeled file")
    _add_verbose(eval_parser)
    eval_parser.add_argument("-i", "--input", required=True, help="Labeled event file")
    eval_parser.add_argument("-o", "--output-dir", default="out/eval", help="Output directory")
    eval_parser.add_argument(
        "--filter",
        choices=["snnf"] + [f.value for f in BaselineFilter],
        help="Filter to evaluate",
    )
    eval_parser.add_argument("--model", help="Network file (required for snnf)")
    eval_parser.add_argument("--k", type=int, help="STCF support count")
    eval_parser.add_argument("--tau-min", type=float, help="Smallest tau in microseconds")
    eval_parser.add_argument("--tau-max", type=float, help="Largest tau in microseconds")
    eval_parser.add_argument("--tau-steps", type=int, help="Number of log-spaced tau values")
    eval_parser.add_argument(
        "--method", choices=["ages", "replay"], help="Single replay or fresh replay per tau"
    )
    eval_parser.add_argument(
        "--polarity-split", action="store_true", help="One SAE per polarity"
    )
    eval_parser.add_argument(
        "--t-min-us",
        type=int,
        help="Score only events at or after this timestamp (the stream is still fully replayed)",
    )
    _add_stack_flags(eval_parser)

    filter_parser = subparsers.add_parser("filter", help="Drop noise-classified events")
    _add_verbose(filter_parser)
    filter_parser.add_argument("-i", "--input", required=True, help="Event file")
    filter_parser.add_argument("-o", "--output", required=True, help="Filtered event file")
    filter_parser.add_argument("--model", required=True, help="Network file")
    filter_parser.add_argument(
        "--theta",
        type=float,
        default=None,
        help="Decision threshold; inf keeps nothing, write --theta=-inf to keep everything",
    )
    _add_stack_flags(filter_parser)

    hw_parser = subparsers.add_parser("hwreport", help="Hardware cost and timing report")
    _add_verbose(hw_parser)
    hw_parser.add_argument("-o", "--output-dir", default="out/hw", help="Output directory")
    _add_geometry_flags(hw_parser)
    hw_parser.add_argument("--n-ebbi", type=int, help="EBBI pairs fed to the network")
    hw_parser.add_argument("--patch-size", type=int, help="Patch size n (odd)")
    hw_parser.add_argument("--word-bits", type=int, help="Bank word width W_word")
    hw_parser.add_argument("--n-banks", type=int, help="Number of memory banks N_mem")
    hw_parser.add_argument("--n-hidden", type=int, help="Hidden LIF neurons")
    hw_parser.add_argument("--clock-hz", type=float, help="System clock in Hz")
    hw_parser.add_argument("--mode", choices=["pipelined", "serial"], help="Pipeline mode")
    hw_parser.add_argument(
        "--serial-cycles", type=int, help="Cycles per event in serial mode (latency or latency+1)"
    )
    hw_parser.add_argument("--event-rate", type=float, help="Event rate in Hz for total power")
    return parser


def _dispatch(args: argparse.Namespace) -> None:
    if args.command == "synth":
        cmd_synth(args.output_dir)
    elif args.command == "mix":
        cmd_mix(args.signal, args.noise, args.output, relabel_inputs=not args.keep_labels)
    elif args.command == "train":
        cmd_train(args.input, args.output_dir)
    elif args.command == "eval":
        cmd_eval(args.input, args.output_dir, filter=args.filter, model_path=args.model)
    elif args.command == "filter":
        cmd_filter(args.input, args.output, args.model, theta=args.theta)
    elif args.command == "hwreport":
        cmd_hwreport(args.output_dir)


def main(argv: list[str] | None = None) -> int:
    """Parse arguments, load settings and run one command; returns the exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)

    # If no arguments provided, show help
    if not args.command:
        parser.print_help()
        return 0

    setup_logging(args.verbose)
    out = Output(__name__)
    try:
        settings.load(args.config_file, _collect_overrides(args))
    except settings.ConfigError as exc:
        out.error(str(exc))
        return 1
    out.log_only(f"Run start command={args.command} settings={settings.source_path()}")

    try:
        _dispatch(args)
    except _HANDLED_ERRORS as exc:
        out.error(str(exc))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
