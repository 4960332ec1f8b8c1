"""Normalization bounds, per-channel scaling and windowing."""

import math

import numpy as np
import pytest

from soclab import (
    BatteryConfig,
    Channel,
    DegenerateChannelError,
    InputWindow,
    NormalizationBounds,
    SensorSample,
    TraceTooShortError,
    denormalize,
    fit_bounds,
    make_windows,
    normalize,
    normalize_trace,
    read_bit,
    simulate_discharge,
    synthesize_cycle,
    window_targets,
    windows_from_frames,
)
from soclab.dataset import _raw_channels


def _trace_from(voltage, current, temperature):
    from soclab.battery import DischargeTrace

    n = len(voltage)
    return DischargeTrace(
        t_s=np.arange(n, dtype=np.float64),
        voltage_V=np.asarray(voltage, dtype=np.float64),
        current_A=np.asarray(current, dtype=np.float64),
        temperature_C=np.asarray(temperature, dtype=np.float64),
        soc_truth=np.linspace(1.0, 0.5, n),
        config=BatteryConfig(),
    )


def test_fit_bounds_single_trace():
    trace = _trace_from([3.0, 4.2, 3.6], [0.0, 2.0, 1.0], [25.0, 30.0, 27.0])
    bounds = fit_bounds([trace])
    assert bounds.channel_range(Channel.VOLTAGE) == (3.0, 4.2)
    assert bounds.channel_range(Channel.CURRENT) == (0.0, 2.0)
    assert bounds.channel_range(Channel.TEMPERATURE) == (25.0, 30.0)


def test_fit_bounds_pools_traces():
    a = _trace_from([3.2, 3.8], [0.5, 1.0], [25.0, 26.0])
    b = _trace_from([3.0, 3.6], [0.8, 2.5], [24.0, 25.5])
    bounds = fit_bounds([a, b])
    assert bounds.channel_range(Channel.VOLTAGE) == (3.0, 3.8)
    assert bounds.channel_range(Channel.CURRENT) == (0.5, 2.5)
    assert bounds.channel_range(Channel.TEMPERATURE) == (24.0, 26.0)


def test_fit_bounds_rejects_constant_channel():
    trace = _trace_from([3.0, 4.0], [1.0, 2.0], [25.0, 25.0])
    with pytest.raises(DegenerateChannelError):
        fit_bounds([trace])
    with pytest.raises(ValueError):
        fit_bounds([])


def test_normalize_endpoints_exact():
    bounds = NormalizationBounds(
        minimum=np.array([3.0, 0.0, 20.0]), maximum=np.array([4.0, 2.0, 30.0])
    )
    low = normalize(SensorSample(0.0, 3.0, 0.0, 20.0), bounds)
    assert low.tolist() == [0.0, 0.0, 0.0]
    high = normalize(SensorSample(0.0, 4.0, 2.0, 30.0), bounds)
    assert high.tolist() == [1.0, 1.0, 1.0]
    mid = normalize(SensorSample(0.0, 3.5, 1.0, 25.0), bounds)
    assert mid.tolist() == [0.5, 0.5, 0.5]


def test_normalize_clamps_out_of_range():
    bounds = NormalizationBounds(
        minimum=np.array([3.0, 0.0, 20.0]), maximum=np.array([4.0, 2.0, 30.0])
    )
    below = normalize(SensorSample(0.0, 2.5, -1.0, 10.0), bounds)
    assert below.tolist() == [0.0, 0.0, 0.0]
    above = normalize(SensorSample(0.0, 5.0, 3.0, 40.0), bounds)
    assert above.tolist() == [1.0, 1.0, 1.0]


def test_normalized_voltage_bit_pattern():
    # 3.9 V against bounds (3.0, 4.2) lands a couple of ulps under 0.75; the
    # stored value keeps the [0.5, 1) exponent pattern: bits 3..10 set and
    # (bit 11, bit 12) == (1, 0).
    bounds = NormalizationBounds(
        minimum=np.array([3.0, 0.0, 20.0]), maximum=np.array([4.2, 2.0, 30.0])
    )
    v = float(normalize(SensorSample(0.0, 3.9, 1.0, 25.0), bounds)[0])
    assert v == pytest.approx(0.75, abs=4 * math.ulp(0.75))
    assert read_bit(v, 1) == 0
    assert all(read_bit(v, k) == 1 for k in range(3, 11))
    assert (read_bit(v, 11), read_bit(v, 12)) == (1, 0)


def test_normalize_trace_matches_per_sample():
    config = BatteryConfig(capacity_Ah=0.5)
    trace = synthesize_cycle(config, rng=2)
    bounds = fit_bounds([trace])
    frames = normalize_trace(trace, bounds)
    assert frames.shape == (len(trace), 3)
    assert np.all(frames >= 0.0) and np.all(frames <= 1.0)
    for k in (0, len(trace) // 2, len(trace) - 1):
        assert np.array_equal(frames[k], normalize(trace.samples[k], bounds))


def test_denormalize_round_trip_within_ulp():
    bounds = NormalizationBounds(
        minimum=np.array([2.8, 0.0, 24.0]), maximum=np.array([4.2, 3.0, 31.0])
    )
    rng = np.random.default_rng(17)
    raw = np.column_stack(
        [rng.uniform(2.8, 4.2, 200), rng.uniform(0.0, 3.0, 200), rng.uniform(24.0, 31.0, 200)]
    )
    trace = _trace_from(raw[:, 0], raw[:, 1], raw[:, 2])
    back = denormalize(normalize_trace(trace, bounds), bounds)
    tol = np.array([math.ulp(4.2), math.ulp(3.0), math.ulp(31.0)])
    assert np.all(np.abs(back - raw) <= tol)


def test_windows_cover_multiples_of_length():
    frames = np.zeros((900, 3))
    windows = windows_from_frames(frames, 300)
    assert [w.end_step for w in windows] == [300, 600, 900]
    assert all(w.frames.shape == (300, 3) for w in windows)


def test_windows_short_trace_raises():
    with pytest.raises(TraceTooShortError):
        windows_from_frames(np.zeros((299, 3)), 300)


def test_windows_remainder_dropped():
    windows = windows_from_frames(np.zeros((301, 3)), 300)
    assert [w.end_step for w in windows] == [300]


def test_window_count_property():
    rng = np.random.default_rng(23)
    for _ in range(50):
        n = int(rng.integers(7, 200))
        windows = windows_from_frames(np.zeros((n, 3)), 7)
        assert len(windows) == n // 7
        assert windows[-1].end_step == 7 * (n // 7)


def test_stride_controls_overlap():
    frames = np.arange(400 * 3, dtype=np.float64).reshape(400, 3)
    windows = windows_from_frames(frames, 300, stride=50)
    assert [w.end_step for w in windows] == [300, 350, 400]
    assert np.array_equal(windows[1].frames, frames[50:350])
    with pytest.raises(ValueError):
        windows_from_frames(frames, 300, stride=0)
    with pytest.raises(ValueError):
        windows_from_frames(frames, 0)


def test_window_frames_are_normalized_slices():
    config = BatteryConfig(capacity_Ah=0.2)
    trace = synthesize_cycle(config, rng=4)
    bounds = fit_bounds([trace])
    windows = make_windows(trace, bounds, 50)
    frames = normalize_trace(trace, bounds)
    for w in windows:
        assert np.array_equal(w.frames, frames[w.end_step - 50 : w.end_step])


def test_window_targets_take_final_sample_truth():
    config = BatteryConfig(capacity_Ah=0.2)
    trace = synthesize_cycle(config, rng=4)
    bounds = fit_bounds([trace])
    windows = make_windows(trace, bounds, 50)
    targets = window_targets(trace, windows)
    assert len(targets) == len(windows)
    for t, w in zip(targets, windows):
        assert t == trace.soc_truth[w.end_step - 1]


def test_bounds_validation():
    with pytest.raises(ValueError):
        NormalizationBounds(minimum=np.zeros(2), maximum=np.ones(2))
    with pytest.raises(DegenerateChannelError):
        NormalizationBounds(
            minimum=np.array([3.0, 0.0, 25.0]), maximum=np.array([3.0, 2.0, 30.0])
        )
    with pytest.raises(ValueError):
        NormalizationBounds(
            minimum=np.array([math.nan, 0.0, 25.0]), maximum=np.array([4.0, 2.0, 30.0])
        )


def test_raw_channel_order_is_v_i_t():
    trace = _trace_from([3.5, 3.6], [1.0, 1.5], [25.0, 26.0])
    raw = _raw_channels(trace)
    assert raw[0].tolist() == [3.5, 1.0, 25.0]
    assert raw[1].tolist() == [3.6, 1.5, 26.0]


def test_window_immutable_metadata():
    w = InputWindow(frames=np.zeros((3, 3)), end_step=3)
    with pytest.raises(AttributeError):
        w.end_step = 5


def test_simulated_trace_pipeline_end_to_end():
    config = BatteryConfig(capacity_Ah=0.5)
    profile = np.concatenate([np.full(65, 2.0), np.full(65, 1.0)])
    trace = simulate_discharge(config, profile)
    bounds = fit_bounds([trace])
    windows = make_windows(trace, bounds, 40)
    assert len(windows) == 3
    targets = window_targets(trace, windows)
    assert np.all(np.diff(targets) < 0)  # discharge only: SOC falls window over window
