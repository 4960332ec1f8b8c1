"""Synthetic lithium-ion discharge traces with exact coulomb-counting SOC.

Model, per 1-second (default) step with discharge current positive:

    soc[k]   = soc[k-1] - I[k] * dt / (3600 * Q)          (clamped to [0, 1])
    V[k]     = ocv(soc[k]) - I[k] * R_internal
    T[k]     = T[k-1] + c_heat * I[k]^2 * R * dt - c_cool * (T[k-1] - T_amb) * dt

The OCV curve is piecewise linear and strictly increasing in SOC; the default
shape runs through (0, 3.0 V), (0.1, 3.4 V), (0.9, 4.0 V), (1.0, 4.2 V),
qualitatively Li-ion.  The thermal response is first order in the I^2*R
dissipation; default coefficients keep the cell within a few degrees of
ambient.  No aging, balancing or electrochemical detail.

`coulomb_count` runs the identical SOC recurrence (same operations in the
same order) so a simulated trace's ground truth is reproducible bit-for-bit
from its own current sequence; the safety monitor uses the same integrator
as its independent reference.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DEFAULT_OCV_POINTS = ((0.0, 3.0), (0.1, 3.4), (0.9, 4.0), (1.0, 4.2))

TRACE_CSV_HEADER = ["t_s", "voltage_V", "current_A", "temperature_C", "soc_truth"]


@dataclass(frozen=True)
class OcvCurve:
    """Piecewise-linear open-circuit voltage as a function of SOC in [0, 1]."""

    points: tuple[tuple[float, float], ...] = DEFAULT_OCV_POINTS

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise ValueError("OCV curve needs at least two breakpoints")
        socs = [p[0] for p in self.points]
        volts = [p[1] for p in self.points]
        if socs[0] != 0.0 or socs[-1] != 1.0:
            raise ValueError("OCV curve must span SOC 0..1")
        if any(b <= a for a, b in zip(socs, socs[1:])):
            raise ValueError("OCV breakpoints must be strictly increasing in SOC")
        if any(b <= a for a, b in zip(volts, volts[1:])):
            raise ValueError("OCV curve must be strictly increasing in voltage")

    def __call__(self, soc):
        socs = [p[0] for p in self.points]
        volts = [p[1] for p in self.points]
        return np.interp(soc, socs, volts)


@dataclass(frozen=True)
class BatteryConfig:
    capacity_Ah: float = 3.0
    internal_resistance_ohm: float = 0.05
    ocv_curve: OcvCurve = field(default_factory=OcvCurve)
    ambient_temp_C: float = 25.0
    thermal_coeff: float = 0.02  # K per joule dissipated
    cooling_coeff: float = 0.001  # 1/s relaxation toward ambient
    sample_period_s: float = 1.0

    def __post_init__(self) -> None:
        if not self.capacity_Ah > 0:
            raise ValueError("capacity_Ah must be positive")
        if not self.sample_period_s > 0:
            raise ValueError("sample_period_s must be positive")
        if self.internal_resistance_ohm < 0:
            raise ValueError("internal_resistance_ohm must be non-negative")
        if self.thermal_coeff < 0 or self.cooling_coeff < 0:
            raise ValueError("thermal coefficients must be non-negative")


@dataclass(frozen=True)
class SensorSample:
    t_s: float
    voltage_V: float
    current_A: float  # discharge positive
    temperature_C: float


@dataclass
class DischargeTrace:
    """Sampled (V, I, T) discharge cycle plus coulomb-counted ground-truth SOC."""

    t_s: np.ndarray
    voltage_V: np.ndarray
    current_A: np.ndarray
    temperature_C: np.ndarray
    soc_truth: np.ndarray
    config: BatteryConfig

    def __post_init__(self) -> None:
        n = len(self.t_s)
        for name in ("voltage_V", "current_A", "temperature_C", "soc_truth"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length differs from t_s length {n}")
        if n == 0:
            raise ValueError("empty trace")
        if n > 1:
            steps = np.diff(self.t_s)
            if np.any(steps <= 0):
                raise ValueError("t_s must be strictly increasing")
            if not np.allclose(steps, self.config.sample_period_s, rtol=1e-9, atol=1e-9):
                raise ValueError("t_s must advance by the configured sample period")

    def __len__(self) -> int:
        return len(self.t_s)

    @cached_property
    def samples(self) -> list[SensorSample]:
        return [
            SensorSample(float(t), float(v), float(i), float(temp))
            for t, v, i, temp in zip(
                self.t_s, self.voltage_V, self.current_A, self.temperature_C
            )
        ]


class CoulombCounter:
    """Running SOC by charge integration; the monitor's independent reference.

    Uses exactly the same update as the simulator's ground truth.
    """

    def __init__(self, initial_soc: float, config: BatteryConfig) -> None:
        if not 0.0 <= initial_soc <= 1.0:
            raise ValueError("initial_soc must lie in [0, 1]")
        self._soc = float(initial_soc)
        self._scale = config.sample_period_s / (3600.0 * config.capacity_Ah)

    @property
    def soc(self) -> float:
        return self._soc

    def update(self, current_A: float) -> float:
        soc = self._soc - float(current_A) * self._scale
        self._soc = min(1.0, max(0.0, soc))
        return self._soc


def coulomb_count(
    currents, initial_soc: float, config: BatteryConfig
) -> np.ndarray:
    """SOC sequence from charge integration: entry 0 is the initial SOC, entry
    k+1 the SOC after currents[k] flowed for one sample period.

    Negative currents (charging) raise the SOC; the result is clamped to
    [0, 1] step by step.
    """
    counter = CoulombCounter(initial_soc, config)
    out = np.empty(len(currents) + 1)
    out[0] = initial_soc
    for k, current in enumerate(currents):
        if not math.isfinite(current):
            raise ValueError(f"non-finite current at step {k}")
        out[k + 1] = counter.update(current)
    return out


def simulate_discharge(
    config: BatteryConfig, load_profile, initial_soc: float = 1.0
) -> DischargeTrace:
    """Integrate a load profile into a full sensor trace with ground-truth SOC.

    The trace is truncated at the first sample where the SOC reaches 0.
    """
    currents = np.asarray(load_profile, dtype=np.float64)
    if currents.size == 0:
        raise ValueError("empty load profile")
    if not np.all(np.isfinite(currents)):
        raise ValueError("load profile contains non-finite currents")
    if not 0.0 <= initial_soc <= 1.0:
        raise ValueError("initial_soc must lie in [0, 1]")

    soc = coulomb_count(currents, initial_soc, config)[1:]

    exhausted = np.flatnonzero(soc <= 0.0)
    n = int(exhausted[0]) + 1 if exhausted.size else len(soc)
    soc = soc[:n]
    currents = currents[:n]

    voltage = config.ocv_curve(soc) - currents * config.internal_resistance_ohm

    temperature = np.empty(n)
    dt = config.sample_period_s
    heat = config.thermal_coeff * config.internal_resistance_ohm * dt
    t_prev = config.ambient_temp_C
    for k in range(n):
        t_prev = t_prev + heat * currents[k] ** 2 - config.cooling_coeff * (
            t_prev - config.ambient_temp_C
        ) * dt
        temperature[k] = t_prev

    return DischargeTrace(
        t_s=np.arange(n) * dt,
        voltage_V=voltage,
        current_A=currents,
        temperature_C=temperature,
        soc_truth=soc,
        config=config,
    )


def synthesize_cycle(
    config: BatteryConfig, rng, initial_soc: float = 1.0
) -> DischargeTrace:
    """One mixed-rate discharge cycle: random pulses of 0.5-3 A with occasional
    rests, long enough to run the cell down to empty.

    ``rng`` is a seed or a ``numpy.random.Generator``; identical seeds give
    identical traces.
    """
    rng = np.random.default_rng(rng)
    budget_As = initial_soc * 3600.0 * config.capacity_Ah
    pulses: list[np.ndarray] = []
    drawn = 0.0
    while drawn <= budget_As:
        duration = int(rng.integers(30, 181))
        if rng.random() < 0.15:
            amplitude = 0.0
        else:
            amplitude = float(rng.uniform(0.5, 3.0))
        pulses.append(np.full(duration, amplitude))
        drawn += amplitude * duration * config.sample_period_s
    return simulate_discharge(config, np.concatenate(pulses), initial_soc)


def save_trace_csv(trace: DischargeTrace, path) -> None:
    """Write a trace with full float64 round-trip formatting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_CSV_HEADER)
        for t, v, i, temp, soc in zip(
            trace.t_s, trace.voltage_V, trace.current_A, trace.temperature_C, trace.soc_truth
        ):
            writer.writerow(
                [repr(float(t)), repr(float(v)), repr(float(i)), repr(float(temp)), repr(float(soc))]
            )


def load_trace_csv(path, config: BatteryConfig | None = None) -> DischargeTrace:
    """Read a trace written by :func:`save_trace_csv`.

    The CSV does not carry the battery parameters; pass ``config`` to attach
    them, otherwise defaults are used with the sample period inferred from
    the time column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRACE_CSV_HEADER:
            raise ValueError(f"bad trace CSV header {header!r}")
        rows = [[float(cell) for cell in row] for row in reader if row]
    if not rows:
        raise ValueError("trace CSV has no samples")
    cols = np.array(rows).T
    if config is None:
        period = float(cols[0][1] - cols[0][0]) if len(rows) > 1 else 1.0
        config = BatteryConfig(sample_period_s=period)
    return DischargeTrace(
        t_s=cols[0],
        voltage_V=cols[1],
        current_A=cols[2],
        temperature_C=cols[3],
        soc_truth=cols[4],
        config=config,
    )
