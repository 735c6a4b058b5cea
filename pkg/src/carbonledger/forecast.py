"""Whole-run prediction from completed epochs.

After the first epoch finishes, the planned total is extrapolated
linearly: setup cost once, plus the planned epoch count times the mean of
the completed epochs. Emissions are always recomputed from the predicted
energy via the supplied intensity, never extrapolated on their own, so a
forecast can never disagree with the carbon arithmetic.

Refinement folds each newly completed epoch into the mean; on a workload
whose epochs grow heavier the early forecast undershoots, and the
refinement trail makes that visible.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from . import carbon
from .carbon import CarbonIntensity
from .errors import EpochIndexRegression, NoCompletedEpochs

_EPOCH_NAME = re.compile(r"^epoch (\d+)$")


@dataclass(frozen=True)
class PhaseSummary:
    """Duration, energy, and emissions of one named phase."""

    phase_name: str
    duration_hours: float
    facility_kwh: float
    co2e_kg: float

    def __post_init__(self) -> None:
        for name in ("duration_hours", "facility_kwh", "co2e_kg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class Forecast:
    """Prediction snapshot after ``basis_epochs`` completed epochs.

    The per-epoch means and setup figures are carried so the snapshot can
    be refined without re-reading the run.
    """

    basis_epochs: int
    planned_epochs: int
    predicted_duration_hours: float
    predicted_kwh: float
    predicted_co2e_kg: float
    includes_setup: bool
    intensity_g_per_kwh: float
    epoch_mean_hours: float
    epoch_mean_kwh: float
    setup_hours: float = 0.0
    setup_kwh: float = 0.0


def _epoch_index(summary: PhaseSummary) -> int | None:
    match = _EPOCH_NAME.match(summary.phase_name)
    return int(match.group(1)) if match else None


def predict(
    completed: list[PhaseSummary],
    setup: PhaseSummary | None,
    planned_epochs: int,
    intensity: CarbonIntensity | float,
) -> Forecast:
    """Extrapolate the whole run from epochs 1..k.

    planned_epochs must be at least the number of completed epochs; with
    k == planned the prediction is exactly the measured total.
    """
    if not completed:
        raise NoCompletedEpochs("need at least one completed epoch to predict")
    k = len(completed)
    if planned_epochs < k:
        raise ValueError("planned_epochs must be >= completed epochs")
    grams = intensity.grams_per_kwh if isinstance(intensity, CarbonIntensity) else float(intensity)
    mean_hours = math.fsum(p.duration_hours for p in completed) / k
    mean_kwh = math.fsum(p.facility_kwh for p in completed) / k
    setup_hours = setup.duration_hours if setup else 0.0
    setup_kwh = setup.facility_kwh if setup else 0.0
    kwh = setup_kwh + planned_epochs * mean_kwh
    return Forecast(
        basis_epochs=k,
        planned_epochs=planned_epochs,
        predicted_duration_hours=setup_hours + planned_epochs * mean_hours,
        predicted_kwh=kwh,
        predicted_co2e_kg=carbon.co2e(kwh, grams),
        includes_setup=setup is not None,
        intensity_g_per_kwh=grams,
        epoch_mean_hours=mean_hours,
        epoch_mean_kwh=mean_kwh,
        setup_hours=setup_hours,
        setup_kwh=setup_kwh,
    )


def refine(forecast: Forecast, completed: PhaseSummary) -> Forecast:
    """Fold the next completed epoch into the forecast.

    If the summary is named ``epoch <n>``, n must be exactly the next
    epoch index; anything else raises EpochIndexRegression.
    """
    index = _epoch_index(completed)
    expected = forecast.basis_epochs + 1
    if index is not None and index != expected:
        raise EpochIndexRegression(f"expected epoch {expected}, got {completed.phase_name!r}")
    k = expected
    mean_hours = (forecast.epoch_mean_hours * forecast.basis_epochs + completed.duration_hours) / k
    mean_kwh = (forecast.epoch_mean_kwh * forecast.basis_epochs + completed.facility_kwh) / k
    kwh = forecast.setup_kwh + forecast.planned_epochs * mean_kwh
    return Forecast(
        basis_epochs=k,
        planned_epochs=forecast.planned_epochs,
        predicted_duration_hours=forecast.setup_hours + forecast.planned_epochs * mean_hours,
        predicted_kwh=kwh,
        predicted_co2e_kg=carbon.co2e(kwh, forecast.intensity_g_per_kwh),
        includes_setup=forecast.includes_setup,
        intensity_g_per_kwh=forecast.intensity_g_per_kwh,
        epoch_mean_hours=mean_hours,
        epoch_mean_kwh=mean_kwh,
        setup_hours=forecast.setup_hours,
        setup_kwh=forecast.setup_kwh,
    )
