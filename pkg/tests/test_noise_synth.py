import numpy as np
import pytest

from components.dvs_events import Label, Polarity, SensorGeometry
from components.noise_synth import (
    EdgeOrientation,
    LeakNoiseConfig,
    MovingEdgeConfig,
    ShotNoiseConfig,
    edge_position,
    gen_leak_noise,
    gen_moving_edge,
    gen_shot_noise,
    generator_metadata,
    matched_shot_rate,
)

GEOMETRY = SensorGeometry(64, 48)


def test_shot_noise_is_deterministic_per_seed():
    a = gen_shot_noise(GEOMETRY, 500_000, ShotNoiseConfig(rate_hz=5.0, seed=7))
    b = gen_shot_noise(GEOMETRY, 500_000, ShotNoiseConfig(rate_hz=5.0, seed=7))
    c = gen_shot_noise(GEOMETRY, 500_000, ShotNoiseConfig(rate_hz=5.0, seed=8))
    assert a == b
    assert a != c


def test_shot_noise_count_matches_rate():
    stream = gen_shot_noise(GEOMETRY, 1_000_000, ShotNoiseConfig(rate_hz=10.0, seed=1))
    expected = 10.0 * GEOMETRY.pixels
    # Poisson total: 5 standard deviations
    assert abs(len(stream) - expected) < 5 * np.sqrt(expected)
    assert np.all(stream.label == Label.NOISE)
    assert set(np.unique(stream.p).tolist()) == {0, 1}
    assert np.all(np.diff(stream.t.astype(np.int64)) >= 0)
    assert stream.t.max() < 1_000_000


def test_shot_noise_is_spatially_uniform():
    stream = gen_shot_noise(GEOMETRY, 1_000_000, ShotNoiseConfig(rate_hz=10.0, seed=2))
    counts = np.bincount(
        stream.y.astype(np.int64) * GEOMETRY.width + stream.x, minlength=GEOMETRY.pixels
    )
    expected = len(stream) / GEOMETRY.pixels
    chi2 = np.sum((counts - expected) ** 2 / expected)
    dof = GEOMETRY.pixels - 1
    # one-sided 0.1% critical value, normal approximation
    assert chi2 < dof + 3.09 * np.sqrt(2 * dof)


def test_zero_rate_gives_empty_stream():
    stream = gen_shot_noise(GEOMETRY, 100_000, ShotNoiseConfig(rate_hz=0.0))
    assert len(stream) == 0


def test_invalid_rates_rejected():
    with pytest.raises(ValueError):
        ShotNoiseConfig(rate_hz=-1.0)
    with pytest.raises(ValueError):
        LeakNoiseConfig(mean_rate_hz=1.0, dispersion=-0.1)
    with pytest.raises(ValueError):
        gen_shot_noise(GEOMETRY, 0, ShotNoiseConfig(rate_hz=1.0))


def test_leak_noise_is_positive_and_dispersed():
    flat = gen_leak_noise(GEOMETRY, 1_000_000, LeakNoiseConfig(mean_rate_hz=4.0, seed=2))
    spread = gen_leak_noise(
        GEOMETRY, 1_000_000, LeakNoiseConfig(mean_rate_hz=4.0, dispersion=1.0, seed=2)
    )
    assert np.all(flat.p == Polarity.POSITIVE)
    assert np.all(spread.p == Polarity.POSITIVE)

    expected = 4.0 * GEOMETRY.pixels
    assert abs(len(flat) - expected) < 5 * np.sqrt(expected)

    def per_pixel_variance(stream):
        counts = np.bincount(
            stream.y.astype(np.int64) * GEOMETRY.width + stream.x, minlength=GEOMETRY.pixels
        )
        return counts.var()

    assert per_pixel_variance(spread) > per_pixel_variance(flat)


@pytest.mark.parametrize("orientation", list(EdgeOrientation))
def test_edge_events_follow_the_edge(orientation):
    config = MovingEdgeConfig(speed=100.0, orientation=orientation, bar_width=3, seed=4)
    stream = gen_moving_edge(GEOMETRY, 400_000, config)
    assert len(stream) > 0
    assert np.all(stream.label == Label.SIGNAL)

    position = edge_position(config, stream.t.astype(np.float64))
    line = stream.x if orientation == EdgeOrientation.VERTICAL else stream.y
    lag = np.where(stream.p == Polarity.POSITIVE, 0, config.bar_width)
    assert np.all(np.abs(position - lag - line) <= 1.0)


def test_edge_emits_both_polarities_once_bar_has_passed():
    config = MovingEdgeConfig(speed=200.0, bar_width=2, seed=5)
    stream = gen_moving_edge(GEOMETRY, 200_000, config)
    positive = int(np.sum(stream.p == Polarity.POSITIVE))
    negative = int(np.sum(stream.p == Polarity.NEGATIVE))
    assert positive > 0 and negative > 0
    # the trailing edge lags by bar_width lines
    assert positive > negative


def test_matched_rate_balances_the_mix():
    signal = gen_moving_edge(GEOMETRY, 300_000, MovingEdgeConfig(speed=150.0, seed=3))
    rate = matched_shot_rate(len(signal), GEOMETRY, 300_000)
    assert rate == pytest.approx(len(signal) / (GEOMETRY.pixels * 0.3))

    noise = gen_shot_noise(GEOMETRY, 300_000, ShotNoiseConfig(rate_hz=rate, seed=9))
    assert abs(len(noise) - len(signal)) < 5 * np.sqrt(len(signal))


def test_generator_metadata_records_prng_and_config():
    meta = generator_metadata(
        "moving_edge", GEOMETRY, 1000, MovingEdgeConfig(speed=10.0, seed=11)
    )
    assert meta["prng"] == "philox"
    assert meta["seed"] == 11
    assert meta["orientation"] == "vertical"
    assert meta["geometry"] == {"width": 64, "height": 48}
