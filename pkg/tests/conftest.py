import numpy as np
import pytest

from components.dvs_events import EventStream, Label, SensorGeometry
from utils import snnf_config


def random_stream(
    geometry: SensorGeometry,
    n_events: int,
    duration_us: int,
    seed: int,
    labeled: bool = True,
    distinct_times: bool = False,
) -> EventStream:
    """Uniform random events, time-sorted; labels random signal/noise."""
    rng = np.random.default_rng(seed)
    if distinct_times:
        t = np.sort(rng.choice(duration_us, size=n_events, replace=False))
    else:
        t = np.sort(rng.integers(0, duration_us, size=n_events))
    label = rng.integers(0, 2, size=n_events) if labeled else Label.UNLABELED
    return EventStream.from_columns(
        geometry,
        x=rng.integers(0, geometry.width, size=n_events),
        y=rng.integers(0, geometry.height, size=n_events),
        t=t,
        p=rng.integers(0, 2, size=n_events),
        label=label,
    )


@pytest.fixture
def small_geometry() -> SensorGeometry:
    return SensorGeometry(16, 12)


@pytest.fixture
def default_settings():
    snnf_config.load()
    return snnf_config


@pytest.fixture
def make_stream():
    return random_stream
