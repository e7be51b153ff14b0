from __future__ import annotations

import numpy as np
import pytest

from karlsim import datapath as D
from karlsim.kernel import rng_for
from karlsim.sensors import Modality, reference_rig


def _first(rig, mod):
    return next(s for s in rig if s.modality == mod)


@pytest.fixture(scope="module")
def eval_rig():
    return reference_rig("eval")


@pytest.mark.parametrize(
    "mod, expected",
    [
        (Modality.LIDAR_ROTATING, 0.072),
        (Modality.LIDAR_FMCW, 0.220),
        (Modality.CAMERA, 0.139),
    ],
)
def test_every_message_has_nominal_latency(eval_rig, mod, expected):
    spec = _first(eval_rig, mod)
    evs = D.simulate_stream(spec, D.DEFAULT_PROFILES[mod], duration=2.0)
    assert len(evs) == int(2 * spec.rate)
    assert all(e.latency == pytest.approx(expected, abs=1e-12) for e in evs)


def test_radar_below_one_ms(eval_rig):
    spec = _first(eval_rig, Modality.RADAR)
    evs = D.simulate_stream(spec, D.DEFAULT_PROFILES[Modality.RADAR], duration=1.0)
    assert D.mean_latency(evs) < 1e-3


def test_stamp_and_consumer_offsets():
    prof = D.LatencyProfile(0.0, 0.1, 0.0, "at-capture")
    spec = _first(reference_rig(), Modality.CAMERA)
    evs = D.simulate_stream(spec, prof, stamp_offset=2e-3, consumer_offset=-1e-3, duration=1.0)
    assert D.mean_latency(evs) == pytest.approx(0.1 - 3e-3)


def test_host_stamp_hides_capture_time():
    spec = _first(reference_rig(), Modality.RADAR)
    prof = D.LatencyProfile(0.05, 0.0005, 0.0002, "host-at-arrival")
    assert D.mean_latency(D.simulate_stream(spec, prof)) == pytest.approx(0.0007)
    assert prof.nominal_latency == pytest.approx(0.0007)


def test_mean_latency_two_events():
    evs = [D.MessageEvent("a", 0, 0.0, 0.010, 1), D.MessageEvent("a", 1, 1.0, 1.020, 1)]
    assert D.mean_latency(evs) == pytest.approx(0.015)
    with pytest.raises(ValueError):
        D.mean_latency([])


def test_lidar_data_rate():
    spec = _first(reference_rig(), Modality.LIDAR_ROTATING)
    assert D.sensor_data_rate(spec) == pytest.approx(251.65824e6)


def test_camera_data_rate_oracle():
    spec = _first(reference_rig("max"), Modality.CAMERA)
    enc = D.EncodingConfig(2.0, streams=2, compression=10.0)
    assert D.sensor_data_rate(spec, enc) == pytest.approx(1920 * 1200 * 60 * 16 * 2 / 10)


def test_zero_rate_encoding():
    spec = _first(reference_rig(), Modality.LIDAR_ROTATING)
    assert D.sensor_data_rate(spec, D.EncodingConfig(0.0)) == 0.0


def test_jitter_is_seeded(eval_rig):
    spec = _first(eval_rig, Modality.CAMERA)
    prof = D.LatencyProfile(0.0, 0.12, 0.019, "at-capture", jitter=0.005)
    a = D.simulate_stream(spec, prof, duration=2.0, rng=rng_for(1, "x"))
    b = D.simulate_stream(spec, prof, duration=2.0, rng=rng_for(1, "x"))
    assert a == b
    lat = np.array([e.latency for e in a])
    assert lat.min() >= 0.134 and lat.max() <= 0.144 and lat.std() > 0


def test_merged_streams_are_ordered(eval_rig):
    model = D.default_latency_model(eval_rig)
    evs = D.simulate_streams(eval_rig, model, duration=1.0)
    keys = [(e.available_at, e.sensor_id, e.seq) for e in evs]
    assert keys == sorted(keys)
    assert set(D.latency_by_sensor(evs)) == {s.id for s in eval_rig}


def test_bad_profile():
    with pytest.raises(ValueError):
        D.LatencyProfile(-1, 0, 0, "at-capture")
    with pytest.raises(ValueError):
        D.LatencyProfile(0, 0.001, 0, "at-capture", jitter=0.01)


def test_events_csv(tmp_path, eval_rig):
    p = tmp_path / "e.csv"
    D.write_events_csv(D.simulate_stream(eval_rig[0], D.DEFAULT_PROFILES[eval_rig[0].modality]), p)
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(D.EVENT_COLUMNS)
    assert len(lines) == 1 + int(eval_rig[0].rate)
