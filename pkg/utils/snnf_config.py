from copy import deepcopy
from dataclasses import dataclass
from pathlib import Path

import yaml

from components.dvs_events import SensorGeometry
from components.ebbi_stack import BankConfig, EbbiTrigger, StackConfig, TriggerMode
from components.hw_model import CostTable, PipelineConfig, PowerSpec, SnnfDims
from components.snn_trainer import TrainConfig

# =============================================================================
# Shared Configuration Values
# =============================================================================
DEFAULT_VARIABLES_PATH = Path(__file__).resolve().parent.parent / "snnf_base_variables.yml"


class ConfigError(ValueError):
    """Missing, malformed or out-of-range setting."""


# Module-level state: populated by load()
_VARIABLES_PATH: Path = None
_SOURCE_PATH: Path = None
_RAW: dict = {}


def _load_variables(path: Path) -> dict:
    try:
        with path.open("r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle) or {}
    except FileNotFoundError as exc:
        raise ConfigError(f"Missing config file: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"Cannot parse config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a mapping at top level")
    return data


def _merge(base: dict, update: dict) -> dict:
    merged = deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _apply_overrides(raw: dict, overrides: dict | None) -> dict:
    """Overrides use dotted keys (``ebbi.n_ebbi``); ``None`` values are ignored."""
    raw = deepcopy(raw)
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        if not key:
            raise ConfigError(f"Override '{dotted}' must be of the form section.key")
        raw.setdefault(section, {})[key] = value
    return raw


def _require_section(name: str) -> dict:
    section = _RAW.get(name)
    if not isinstance(section, dict):
        raise ConfigError(f"Missing section '{name}' in {_SOURCE_PATH or _VARIABLES_PATH}")
    return section


def _require_value(section: dict, key: str, name: str):
    if key not in section:
        raise ConfigError(f"Missing '{key}' in section '{name}' of {_SOURCE_PATH or _VARIABLES_PATH}")
    return section[key]


def _optional_value(section: dict, key: str, default):
    value = section.get(key, default)
    return default if value is None else value


# =============================================================================
# Command settings without a home in a component
# =============================================================================
@dataclass(frozen=True)
class SynthSettings:
    duration_us: int
    seed: int = 1
    edge_speed: float = 160.0
    edge_orientation: str = "vertical"
    edge_events_per_crossing: float = 2.0
    bar_width: int = 4
    shot_rate_hz: float | None = None
    leak_rate_hz: float = 0.0
    leak_dispersion: float = 0.0
    format: str = "packed"


@dataclass(frozen=True)
class EvalSettings:
    filter: str = "snnf"
    k: int = 4
    tau_min_us: float = 100
    tau_max_us: float = 1_000_000
    tau_steps: int = 31
    method: str = "ages"
    polarity_split: bool = False
    theta: int = 0
    t_min_us: int = 0


# Module-level variables: populated by load()
SENSOR_WIDTH: int = None
SENSOR_HEIGHT: int = None
N_EBBI: int = None
PATCH_SIZE: int = None
N_HIDDEN: int = None
USE_BANKS: bool = None
CLOCK_HZ: float = None
EVENT_RATE_HZ: float = None
geometry: SensorGeometry = None
banks: BankConfig = None
stack: StackConfig = None
training: TrainConfig = None
synth: SynthSettings = None
evaluation: EvalSettings = None
pipeline: PipelineConfig = None
power: PowerSpec = None
costs: CostTable = None
dims: SnnfDims = None


# =============================================================================
# Load function: call this once at startup before using any settings
# =============================================================================
def load(variables_path=None, overrides: dict | None = None) -> None:
    """Load (or reload) all settings.

    Args:
        variables_path: YAML or JSON file layered over ``snnf_base_variables.yml``.
        overrides: ``{"section.key": value}`` applied last (command-line flags).
    """
    global _VARIABLES_PATH, _SOURCE_PATH, _RAW
    global SENSOR_WIDTH, SENSOR_HEIGHT, N_EBBI, PATCH_SIZE, N_HIDDEN, USE_BANKS
    global CLOCK_HZ, EVENT_RATE_HZ
    global geometry, banks, stack, training, synth, evaluation, pipeline, power, costs, dims

    _VARIABLES_PATH = DEFAULT_VARIABLES_PATH
    _SOURCE_PATH = Path(variables_path).resolve() if variables_path else None
    raw = _load_variables(DEFAULT_VARIABLES_PATH)
    if _SOURCE_PATH is not None:
        raw = _merge(raw, _load_variables(_SOURCE_PATH))
    _RAW = _apply_overrides(raw, overrides)

    try:
        _sensor = _require_section("sensor")
        _ebbi = _require_section("ebbi")
        _banks = _require_section("banks")
        _training = _require_section("training")
        _synth = _require_section("synth")
        _eval = _require_section("eval")
        _hardware = _require_section("hardware")
        _costs = _require_section("costs")

        SENSOR_WIDTH = int(_require_value(_sensor, "width", "sensor"))
        SENSOR_HEIGHT = int(_require_value(_sensor, "height", "sensor"))
        N_EBBI = int(_require_value(_ebbi, "n_ebbi", "ebbi"))
        PATCH_SIZE = int(_require_value(_ebbi, "patch_size", "ebbi"))
        N_HIDDEN = int(_require_value(_training, "n_hidden", "training"))
        USE_BANKS = bool(_optional_value(_banks, "use_banks", False))
        CLOCK_HZ = float(_require_value(_hardware, "clock_hz", "hardware"))
        EVENT_RATE_HZ = float(_optional_value(_hardware, "event_rate_hz", 1e6))

        # -------------------------------------------------------------------------
        # Configuration Instances
        # -------------------------------------------------------------------------
        geometry = SensorGeometry(SENSOR_WIDTH, SENSOR_HEIGHT)
        banks = BankConfig(
            n_banks=int(_require_value(_banks, "n_banks", "banks")),
            word_bits=int(_require_value(_banks, "word_bits", "banks")),
        )
        mode = TriggerMode(_optional_value(_ebbi, "trigger", TriggerMode.FIXED_TIME.value))
        if mode == TriggerMode.FIXED_TIME:
            trigger = EbbiTrigger.fixed_time(int(_require_value(_ebbi, "t_e_us", "ebbi")))
        else:
            trigger = EbbiTrigger.fixed_count(int(_require_value(_ebbi, "n_e", "ebbi")))
        stack = StackConfig(
            n_ebbi=N_EBBI,
            trigger=trigger,
            patch_size=PATCH_SIZE,
            banks=banks if USE_BANKS else None,
        )
        training = TrainConfig(
            learning_rate=float(_optional_value(_training, "learning_rate", 0.2)),
            epochs=int(_optional_value(_training, "epochs", 20)),
            batch_size=int(_optional_value(_training, "batch_size", 256)),
            surrogate_slope=float(_optional_value(_training, "surrogate_slope", 1.0)),
            train_fraction=float(_optional_value(_training, "train_fraction", 0.8)),
            seed=int(_optional_value(_training, "seed", 0)),
            n_hidden=N_HIDDEN,
            init_scale=float(_optional_value(_training, "init_scale", 2.0)),
            v_th=float(_optional_value(_training, "v_th", 1.0)),
            beta=float(_optional_value(_training, "beta", 0.5)),
            optimizer=str(_optional_value(_training, "optimizer", "sgd")),
        )
        shot_rate = _synth.get("shot_rate_hz")
        synth = SynthSettings(
            duration_us=int(_require_value(_synth, "duration_us", "synth")),
            seed=int(_optional_value(_synth, "seed", 1)),
            edge_speed=float(_optional_value(_synth, "edge_speed", 160.0)),
            edge_orientation=str(_optional_value(_synth, "edge_orientation", "vertical")),
            edge_events_per_crossing=float(
                _optional_value(_synth, "edge_events_per_crossing", 2.0)
            ),
            bar_width=int(_optional_value(_synth, "bar_width", 4)),
            shot_rate_hz=None if shot_rate is None else float(shot_rate),
            leak_rate_hz=float(_optional_value(_synth, "leak_rate_hz", 0.0)),
            leak_dispersion=float(_optional_value(_synth, "leak_dispersion", 0.0)),
            format=str(_optional_value(_synth, "format", "packed")),
        )
        evaluation = EvalSettings(
            filter=str(_optional_value(_eval, "filter", "snnf")),
            k=int(_optional_value(_eval, "k", 4)),
            tau_min_us=float(_optional_value(_eval, "tau_min_us", 100)),
            tau_max_us=float(_optional_value(_eval, "tau_max_us", 1_000_000)),
            tau_steps=int(_optional_value(_eval, "tau_steps", 31)),
            method=str(_optional_value(_eval, "method", "ages")),
            polarity_split=bool(_optional_value(_eval, "polarity_split", False)),
            theta=int(_optional_value(_eval, "theta", 0)),
            t_min_us=int(_optional_value(_eval, "t_min_us", 0)),
        )
        serial_cycles = _hardware.get("serial_cycles")
        pipeline = PipelineConfig(
            n_ebbi=N_EBBI,
            mode=_optional_value(_hardware, "mode", "pipelined"),
            serial_cycles=None if serial_cycles is None else int(serial_cycles),
        )
        power = PowerSpec(
            dynamic_power_mw=float(_require_value(_hardware, "dynamic_power_mw", "hardware")),
            clock_hz=CLOCK_HZ,
            leakage_mw=float(_optional_value(_hardware, "leakage_mw", 0.0)),
        )
        costs = CostTable(**{key: float(value) for key, value in _costs.items()})
        dims = SnnfDims(
            n_ebbi=N_EBBI,
            patch_size=PATCH_SIZE,
            n_hidden=N_HIDDEN,
            banks=banks,
            read_accounting=str(_optional_value(_hardware, "read_accounting", "per_bank_cycle")),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"Invalid settings in {_SOURCE_PATH or _VARIABLES_PATH}: {exc}") from exc

    _validate_choices()


def _validate_choices() -> None:
    if synth.format not in ("packed", "csv"):
        raise ConfigError(f"synth.format must be packed or csv, got {synth.format}")
    if evaluation.filter not in ("snnf", "baf", "stcf", "onf"):
        raise ConfigError(
            f"eval.filter must be snnf, baf, stcf or onf, got {evaluation.filter}"
        )
    if evaluation.method not in ("ages", "replay"):
        raise ConfigError(f"eval.method must be ages or replay, got {evaluation.method}")
    if evaluation.k < 1:
        raise ConfigError(f"eval.k must be >= 1, got {evaluation.k}")
    if not 0 < evaluation.tau_min_us <= evaluation.tau_max_us or evaluation.tau_steps < 1:
        raise ConfigError("eval tau range must satisfy 0 < tau_min_us <= tau_max_us, tau_steps >= 1")
    if evaluation.t_min_us < 0:
        raise ConfigError(f"eval.t_min_us must be >= 0, got {evaluation.t_min_us}")


def effective_config() -> dict:
    """The merged settings actually in force, for echoing next to outputs."""
    return deepcopy(_RAW)


def source_path() -> Path:
    return _SOURCE_PATH or _VARIABLES_PATH
