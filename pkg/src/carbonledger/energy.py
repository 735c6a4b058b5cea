"""Power-to-energy conversion: the closed-form average-power model and a
trapezoidal trace integrator, plus the time-weighted average that bridges
them.

Units are fixed throughout: durations in hours, power in watts, energy in
kWh, facility overhead as a PUE multiplier >= 1 applied on top of the raw
device-side figure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InsufficientSamples
from .probe import PowerSample
from .sampler import SampleLog

MS_PER_HOUR = 3_600_000.0

#: Facility overhead multiplier used as the default; annual average for a
#: German data center.
DEFAULT_PUE = 1.55

#: A sampling gap larger than this many intervals is filled with the last
#: value carried forward instead of a trapezoid, and flagged.
GAP_FACTOR = 5


@dataclass(frozen=True)
class RunParams:
    """Inputs of the closed-form model: t hours on g devices at p watts."""

    duration_hours: float
    gpu_count: int
    avg_gpu_watts: float
    pue: float = DEFAULT_PUE

    def __post_init__(self) -> None:
        for name in ("duration_hours", "avg_gpu_watts", "pue"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.gpu_count < 1:
            raise ValueError("gpu_count must be >= 1")
        if self.pue < 1:
            raise ValueError("pue must be >= 1")


@dataclass(frozen=True)
class EnergyResult:
    """Raw device-side kWh and the facility figure with PUE applied."""

    raw_kwh: float
    pue: float
    facility_kwh: float
    notes: tuple[str, ...] = ()


def closed_form_energy(params: RunParams) -> EnergyResult:
    """Average-power model: kWh = pue * t * g * p / 1000.

    ``avg_gpu_watts`` is the per-device average; multiplying by the device
    count gives total draw. The raw figure omits the PUE factor.
    """
    raw = params.duration_hours * params.gpu_count * params.avg_gpu_watts / 1000.0
    return EnergyResult(raw_kwh=raw, pue=params.pue, facility_kwh=raw * params.pue)


def _integrate_source(samples: list[PowerSample], gap_limit_ms: float) -> tuple[float, int]:
    """kWh for one source's time-ordered samples; returns (kwh, gap count).

    Trapezoid between consecutive samples; a gap wider than the limit
    contributes last-value-carried-forward energy instead, so dropped
    reads never silently delete energy.
    """
    kwh_terms: list[float] = []
    gaps = 0
    for a, b in zip(samples, samples[1:]):
        dt_ms = b.timestamp_ms - a.timestamp_ms
        if dt_ms > gap_limit_ms:
            kwh_terms.append(a.watts * dt_ms / MS_PER_HOUR / 1000.0)
            gaps += 1
        else:
            kwh_terms.append(0.5 * (a.watts + b.watts) * dt_ms / MS_PER_HOUR / 1000.0)
    return math.fsum(kwh_terms), gaps


def integrate_energy(log: SampleLog, pue: float) -> EnergyResult:
    """Trapezoidal integral of every source's power trace, summed.

    A log with zero or one sample per source integrates to 0. Rejects
    logs containing negative wattages.
    """
    if pue < 1:
        raise ValueError("pue must be >= 1")
    if any(s.watts < 0 for s in log.samples):
        raise ValueError("log contains negative-watt samples")
    gap_limit = GAP_FACTOR * log.sampling_interval_ms
    per_source_kwh: list[float] = []
    notes: list[str] = []
    for source in log.sources():
        series = sorted(log.samples_for(source), key=lambda s: s.timestamp_ms)
        kwh, gaps = _integrate_source(series, gap_limit)
        per_source_kwh.append(kwh)
        if gaps:
            notes.append(f"{source}: {gaps} gap(s) > {GAP_FACTOR}x interval filled with last value")
    raw = math.fsum(per_source_kwh)
    return EnergyResult(raw_kwh=raw, pue=pue, facility_kwh=raw * pue, notes=tuple(notes))


@dataclass(frozen=True)
class AveragePower:
    """Time-weighted mean watts per source, plus the combined figure.

    ``combined`` is total energy over the overall sampled span, i.e. the
    sum of simultaneous per-source draws; feeding it to the closed-form
    model with gpu_count=1 reproduces the integrated energy.
    """

    per_source: dict[str, float]
    combined: float
    duration_hours: float


def average_power(log: SampleLog) -> AveragePower:
    """Time-weighted average power; requires >= 2 samples per source."""
    sources = log.sources()
    if not sources:
        raise InsufficientSamples("log has no samples")
    gap_limit = GAP_FACTOR * log.sampling_interval_ms
    per_source: dict[str, float] = {}
    first_ms = math.inf
    last_ms = -math.inf
    total_kwh_terms: list[float] = []
    for source in sources:
        series = sorted(log.samples_for(source), key=lambda s: s.timestamp_ms)
        if len(series) < 2:
            raise InsufficientSamples(f"source {source} has {len(series)} sample(s), need >= 2")
        kwh, _ = _integrate_source(series, gap_limit)
        span_hours = (series[-1].timestamp_ms - series[0].timestamp_ms) / MS_PER_HOUR
        per_source[source] = kwh * 1000.0 / span_hours
        first_ms = min(first_ms, series[0].timestamp_ms)
        last_ms = max(last_ms, series[-1].timestamp_ms)
        total_kwh_terms.append(kwh)
    duration_hours = (last_ms - first_ms) / MS_PER_HOUR
    combined = math.fsum(total_kwh_terms) * 1000.0 / duration_hours
    return AveragePower(per_source=per_source, combined=combined, duration_hours=duration_hours)
