from __future__ import annotations

from pathlib import Path

import pytest

from carbonledger import carbon
from carbonledger.forecast import PhaseSummary
from carbonledger.ledger import ExperimentRecord
from carbonledger.probe import PowerSample, ProbeDescriptor, ProbeKind, open_probe
from carbonledger.sampler import SampleLog, parse_events

from goldens import GOLDEN_ROWS


def write_trace(path: Path, pairs: list[tuple[int, float]]) -> Path:
    path.write_text("".join(f"{t},{w}\n" for t, w in pairs), encoding="utf-8", newline="\n")
    return path


def constant_trace(path: Path, watts: float, duration_ms: int, cadence_ms: int = 1000) -> Path:
    return write_trace(path, [(t, watts) for t in range(0, duration_ms + 1, cadence_ms)])


def write_events(path: Path, lines: list[str]) -> Path:
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8", newline="\n")
    return path


def replay_probe(trace: Path, device_count: int = 1, name: str = "replay"):
    return open_probe(ProbeDescriptor(name, ProbeKind.REPLAY, device_count, str(trace)))


def make_log(
    series: dict[str, list[tuple[int, float]]],
    interval_ms: int = 1000,
    event_lines: list[str] | None = None,
) -> SampleLog:
    """Build a SampleLog directly, without files or probes."""
    samples = tuple(
        sorted(
            (PowerSample(src, t, w) for src, pairs in series.items() for t, w in pairs),
            key=lambda s: (s.timestamp_ms, s.source_id),
        )
    )
    events, violations = parse_events(event_lines or [])
    return SampleLog(samples, events, interval_ms, violations)


def make_record(
    label: str = "demo",
    hours: float = 1.0,
    kwh: float = 0.775,
    grams: float = 380.0,
    car_factor: float = carbon.DEFAULT_CAR_KG_PER_KM,
    **overrides,
) -> ExperimentRecord:
    """A self-consistent record; co2e and car_km derived from the inputs."""
    kg = carbon.co2e(kwh, grams)
    fields = dict(
        experiment_id=overrides.pop("experiment_id", f"id-{label}"),
        label=label,
        started_at="2026-08-10T12:00:00+00:00",
        duration_hours=hours,
        epochs_completed=3,
        energy_kwh=kwh,
        intensity_g_per_kwh=grams,
        pue=1.55,
        co2e_kg=kg,
        car_km=carbon.car_km_equivalent(kg, car_factor),
        car_factor_kg_per_km=car_factor,
        region="DE",
        phase_breakdown=(
            PhaseSummary("setup", 0.0, 0.0, 0.0),
            PhaseSummary("epoch 1", hours / 3, kwh / 3, carbon.co2e(kwh / 3, grams)),
        ),
        quality_notes=(),
    )
    fields.update(overrides)
    return ExperimentRecord(**fields)


def golden_records() -> list[ExperimentRecord]:
    """The six reference rows, each self-consistent at its own implied
    intensity and car factor so the stored columns equal the published
    ones exactly."""
    return [
        make_record(
            label=label,
            hours=hours,
            kwh=kwh,
            grams=kg / kwh * 1000.0,
            car_factor=kg / km,
            phase_breakdown=(),
        )
        for label, hours, kwh, kg, km in GOLDEN_ROWS
    ]


@pytest.fixture
def triples_file(tmp_path: Path) -> Path:
    rows = [
        "refrigerator\tAtLocation\tkitchen\t8.2",
        "dog\tIsA\tanimal\t6.1",
        "oven\tUsedFor\tbaking\t7.3",
        "bird\tCapableOf\tfly\t5.5",
        "rain\tCauses\twet_ground\t4.9",
        "summer\tIsA\tseason\t3.2",
    ]
    path = tmp_path / "triples.tsv"
    path.write_text("".join(r + "\n" for r in rows), encoding="utf-8", newline="\n")
    return path
