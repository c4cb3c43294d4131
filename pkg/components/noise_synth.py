"""
Labeled synthetic event generators: shot noise, leak noise and a moving bar.

All generators draw from ``numpy.random.Generator(numpy.random.Philox(seed))`` so a
(config, seed) pair always reproduces the same stream byte for byte.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from components.dvs_events import EventStream, Label, Polarity, SensorGeometry
from utils.output import Output

out = Output(__name__)

PRNG_ALGORITHM = "philox"


class EdgeOrientation(str, Enum):
    # vertical edge sweeps along x, horizontal edge sweeps along y
    VERTICAL = "vertical"
    HORIZONTAL = "horizontal"


@dataclass(frozen=True)
class ShotNoiseConfig:
    rate_hz: float
    seed: int = 0

    def __post_init__(self):
        if self.rate_hz < 0:
            raise ValueError(f"rate_hz must be >= 0, got {self.rate_hz}")


@dataclass(frozen=True)
class LeakNoiseConfig:
    mean_rate_hz: float
    dispersion: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.mean_rate_hz < 0:
            raise ValueError(f"mean_rate_hz must be >= 0, got {self.mean_rate_hz}")
        if self.dispersion < 0:
            raise ValueError(f"dispersion must be >= 0, got {self.dispersion}")


@dataclass(frozen=True)
class MovingEdgeConfig:
    speed: float
    orientation: EdgeOrientation = EdgeOrientation.VERTICAL
    event_rate_per_crossing: float = 2.0
    bar_width: int = 4
    start: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError(f"speed must be > 0, got {self.speed}")
        if self.event_rate_per_crossing < 0:
            raise ValueError("event_rate_per_crossing must be >= 0")
        if self.bar_width < 0:
            raise ValueError("bar_width must be >= 0")
        object.__setattr__(self, "orientation", EdgeOrientation(self.orientation))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _check_duration(duration_us: int) -> None:
    if duration_us <= 0:
        raise ValueError(f"duration_us must be > 0, got {duration_us}")


def _poisson_stream(
    geometry: SensorGeometry,
    duration_us: int,
    rates_hz: np.ndarray,
    polarity: int | None,
    rng: np.random.Generator,
) -> EventStream:
    """Independent homogeneous Poisson process per pixel; ``rates_hz`` is H x W."""
    duration_s = duration_us / 1e6
    counts = rng.poisson(rates_hz.ravel() * duration_s)
    total = int(counts.sum())
    pixel = np.repeat(np.arange(geometry.pixels, dtype=np.int64), counts)
    t = rng.integers(0, duration_us, size=total, dtype=np.uint64)
    if polarity is None:
        p = rng.integers(0, 2, size=total, dtype=np.uint8)
    else:
        p = np.full(total, polarity, dtype=np.uint8)
    order = np.argsort(t, kind="stable")
    pixel = pixel[order]
    return EventStream.from_columns(
        geometry,
        x=pixel % geometry.width,
        y=pixel // geometry.width,
        t=t[order],
        p=p[order],
        label=Label.NOISE,
    )


def gen_shot_noise(
    geometry: SensorGeometry, duration_us: int, config: ShotNoiseConfig
) -> EventStream:
    _check_duration(duration_us)
    rng = make_rng(config.seed)
    rates = np.full((geometry.height, geometry.width), float(config.rate_hz))
    stream = _poisson_stream(geometry, duration_us, rates, None, rng)
    out.log_only(
        f"Shot noise: {len(stream)} events, rate={config.rate_hz} Hz/px, seed={config.seed}"
    )
    return stream


def gen_leak_noise(
    geometry: SensorGeometry, duration_us: int, config: LeakNoiseConfig
) -> EventStream:
    _check_duration(duration_us)
    rng = make_rng(config.seed)
    sigma = float(config.dispersion)
    if sigma == 0:
        rates = np.full((geometry.height, geometry.width), float(config.mean_rate_hz))
    else:
        # mu = -sigma^2/2 keeps the per-pixel mean at mean_rate_hz
        factors = rng.lognormal(
            mean=-0.5 * sigma * sigma, sigma=sigma, size=(geometry.height, geometry.width)
        )
        rates = config.mean_rate_hz * factors
    stream = _poisson_stream(
        geometry, duration_us, rates, int(Polarity.POSITIVE), rng
    )
    out.log_only(
        f"Leak noise: {len(stream)} events, mean={config.mean_rate_hz} Hz/px, "
        f"dispersion={sigma}, seed={config.seed}"
    )
    return stream


def edge_position(config: MovingEdgeConfig, t_us: float | np.ndarray) -> float | np.ndarray:
    """Analytic position (pixels) of the leading edge at time ``t_us``."""
    return config.start + config.speed * (np.asarray(t_us, dtype=np.float64) / 1e6)


def gen_moving_edge(
    geometry: SensorGeometry, duration_us: int, config: MovingEdgeConfig
) -> EventStream:
    """
    A bar of width ``bar_width`` sweeping the frame at ``speed`` pixels/s.

    Each pixel emits Poisson(``event_rate_per_crossing``) positive events while the
    leading edge crosses it and as many negative events while the trailing edge
    crosses it; event times are uniform inside the crossing interval, so every event
    lies within one pixel of its edge.
    """
    _check_duration(duration_us)
    rng = make_rng(config.seed)
    vertical = config.orientation == EdgeOrientation.VERTICAL
    lines = geometry.width if vertical else geometry.height
    span = geometry.height if vertical else geometry.width
    dwell_us = 1e6 / config.speed

    xs, ys, ts, ps = [], [], [], []
    for polarity, lag in ((Polarity.POSITIVE, 0), (Polarity.NEGATIVE, config.bar_width)):
        # edge at position pos crosses line c during [c, c+1) -> time window per line
        line = np.arange(lines, dtype=np.float64)
        t_enter = (line + lag - config.start) * dwell_us
        counts = rng.poisson(config.event_rate_per_crossing, size=(lines, span))
        counts[t_enter < 0, :] = 0
        total = int(counts.sum())
        flat = np.repeat(np.arange(lines * span, dtype=np.int64), counts.ravel())
        line_idx = flat // span
        across = flat % span
        t = t_enter[line_idx] + rng.random(total) * dwell_us
        keep = t < duration_us
        t = np.floor(t[keep]).astype(np.uint64)
        line_idx = line_idx[keep]
        across = across[keep]
        if vertical:
            xs.append(line_idx)
            ys.append(across)
        else:
            xs.append(across)
            ys.append(line_idx)
        ts.append(t)
        ps.append(np.full(len(t), int(polarity), dtype=np.uint8))

    x = np.concatenate(xs)
    y = np.concatenate(ys)
    t = np.concatenate(ts)
    p = np.concatenate(ps)
    order = np.argsort(t, kind="stable")
    stream = EventStream.from_columns(
        geometry, x=x[order], y=y[order], t=t[order], p=p[order], label=Label.SIGNAL
    )
    out.log_only(
        f"Moving edge: {len(stream)} events, speed={config.speed} px/s, "
        f"orientation={config.orientation.value}, seed={config.seed}"
    )
    return stream


def matched_shot_rate(signal_count: int, geometry: SensorGeometry, duration_us: int) -> float:
    """Per-pixel shot rate whose expected count equals ``signal_count``."""
    _check_duration(duration_us)
    return signal_count / (geometry.pixels * duration_us / 1e6)


def generator_metadata(name: str, geometry: SensorGeometry, duration_us: int, config) -> dict:
    meta = {
        "generator": name,
        "prng": PRNG_ALGORITHM,
        "geometry": {"width": geometry.width, "height": geometry.height},
        "duration_us": int(duration_us),
    }
    for key, value in vars(config).items():
        meta[key] = value.value if isinstance(value, Enum) else value
    return meta
