"""Command-line surface: wrap-and-track a workload, report, predict.

The tracker is a wrapper, not a library embedded in the workload: ``run``
spawns the child command, points it at the event file via
``CARBONLEDGER_EVENTS``, samples the configured probes until the child
exits, appends one experiment record to the ledger, and propagates the
child's exit code.

Exit codes: 0 success, 1 child/workload failure, 2 usage or config error.

Config precedence everywhere: flags > environment variables > config
file > built-in defaults. The config file is flat ``key = value`` text
(keys: label, region, pue, interval_ms, probe, ledger, events, registry,
planned_epochs, car_factor).
"""

from __future__ import annotations

import argparse
import datetime
import os
import signal
import subprocess
import sys
import tempfile
import uuid
from pathlib import Path

from . import carbon, energy, forecast, ledger, sampler
from .errors import (
    BackendUnavailable,
    CarbonLedgerError,
    EmptySelection,
    TraceParseError,
    UnknownPhase,
)
from .probe import Probe, ProbeDescriptor, ProbeKind, open_probe
from .sampler import EVENTS_ENV, EventKind, SampleLog, run_sampler, slice_phase

LEDGER_ENV = "CARBONLEDGER_LEDGER"
REGISTRY_ENV = "CARBONLEDGER_REGISTRY"

_DEFAULTS = {
    "label": "run",
    "region": "DE",
    "pue": energy.DEFAULT_PUE,
    "interval_ms": 1000,
    "ledger": "carbonledger.jsonl",
    "planned_epochs": 50,
    "car_factor": carbon.DEFAULT_CAR_KG_PER_KM,
}


def parse_probe_spec(spec: str, index: int) -> ProbeDescriptor:
    """Parse a --probe value.

    Forms: ``replay:PATH`` or ``replay:PATH*N`` (same trace fanned out to
    N sources), ``gpu`` or ``gpu:N``, ``cpu``. ``index`` keeps source ids
    unique when the flag repeats.
    """
    kind, _, rest = spec.partition(":")
    base = kind if index == 0 else f"{kind}{chr(ord('a') + index - 1)}"
    if kind == "replay":
        if not rest:
            raise ValueError(f"replay probe needs a trace path: {spec!r}")
        path, star, count = rest.rpartition("*")
        if star and count.isdigit():
            return ProbeDescriptor(base, ProbeKind.REPLAY, int(count), path)
        return ProbeDescriptor(base, ProbeKind.REPLAY, 1, rest)
    if kind == "gpu":
        count = int(rest) if rest else 1
        return ProbeDescriptor(base, ProbeKind.GPU, count)
    if kind == "cpu":
        return ProbeDescriptor(base, ProbeKind.CPU, 1)
    raise ValueError(f"unknown probe kind in {spec!r}")


def load_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` config; # comments and blank lines skipped."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, eq, value = line.partition("=")
            if not eq:
                raise ValueError(f"{path}:{line_no}: expected 'key = value'")
            values[key.strip()] = value.strip()
    return values


def _resolve(flag, env_name: str | None, config: dict[str, str], key: str, cast=str):
    if flag is not None:
        return flag
    if env_name and os.environ.get(env_name):
        return cast(os.environ[env_name])
    if key in config:
        return cast(config[key])
    return _DEFAULTS.get(key)


def _open_probes(specs: list[str], fallbacks: list[str]) -> list[Probe]:
    probes: list[Probe] = []
    failed = 0
    for i, spec in enumerate(specs):
        descriptor = parse_probe_spec(spec, i)
        try:
            probes.append(open_probe(descriptor))
        except BackendUnavailable as exc:
            failed += 1
            print(f"probe {spec!r} unavailable: {exc}", file=sys.stderr)
    if failed and fallbacks:
        for i, spec in enumerate(fallbacks):
            probes.append(open_probe(parse_probe_spec(spec, len(specs) + i)))
    if failed and not fallbacks:
        raise BackendUnavailable("a probe backend is unavailable and no --fallback-probe was given")
    if not probes:
        raise BackendUnavailable("no probes could be opened")
    return probes


def _phase_summaries(
    log: SampleLog, pue: float, grams: float
) -> tuple[forecast.PhaseSummary | None, list[forecast.PhaseSummary]]:
    """Setup plus one summary per completed epoch, from boundary slices."""

    def summarize(phase: str, name: str) -> forecast.PhaseSummary:
        window = sampler.phase_window(log, phase)
        part = slice_phase(log, phase)
        kwh = energy.integrate_energy(part, pue).facility_kwh
        return forecast.PhaseSummary(
            phase_name=name,
            duration_hours=(window[1] - window[0]) / energy.MS_PER_HOUR,
            facility_kwh=kwh,
            co2e_kg=carbon.co2e(kwh, grams),
        )

    setup = None
    try:
        setup = summarize("setup", "setup")
    except UnknownPhase:
        pass
    epochs = []
    for k in range(1, log.epochs_completed() + 1):
        try:
            epochs.append(summarize(f"epoch:{k}", f"epoch {k}"))
        except UnknownPhase:
            break
    return setup, epochs


def _duration_hours(log: SampleLog) -> float:
    starts = log.events_of(EventKind.TRAIN_START)
    ends = log.events_of(EventKind.TRAIN_END)
    if starts and ends:
        return (ends[0].timestamp_ms - starts[0].timestamp_ms) / energy.MS_PER_HOUR
    if len(log.samples) >= 2:
        return (log.samples[-1].timestamp_ms - log.samples[0].timestamp_ms) / energy.MS_PER_HOUR
    return 0.0


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config_file(args.config) if args.config else {}
    label = _resolve(args.label, None, config, "label")
    region = _resolve(args.region, None, config, "region")
    pue = float(_resolve(args.pue, None, config, "pue", float))
    interval_ms = int(_resolve(args.interval_ms, None, config, "interval_ms", int))
    ledger_path = _resolve(args.ledger, LEDGER_ENV, config, "ledger")
    registry_path = _resolve(args.registry, REGISTRY_ENV, config, "registry")
    planned_epochs = int(_resolve(args.planned_epochs, None, config, "planned_epochs", int))
    car_factor = float(_resolve(args.car_factor, None, config, "car_factor", float))
    events_path = _resolve(args.events, EVENTS_ENV, config, "events")
    if events_path is None:
        fd, events_path = tempfile.mkstemp(prefix="carbonledger-", suffix=".events")
        os.close(fd)
    probe_specs = args.probe or ([config["probe"]] if "probe" in config else [])
    if pue < 1:
        print("pue must be >= 1", file=sys.stderr)
        return 2
    if not probe_specs:
        print("at least one --probe is required", file=sys.stderr)
        return 2
    if not args.child:
        print("no child command given (use: run [options] -- <command> ...)", file=sys.stderr)
        return 2

    registry = carbon.load_intensity_registry(registry_path)
    if region not in registry:
        print(f"region {region!r} not in intensity registry", file=sys.stderr)
        return 2
    intensity = registry[region]

    try:
        probes = _open_probes(probe_specs, args.fallback_probe or [])
    except (BackendUnavailable, TraceParseError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return 2

    # the event file is this run's private channel: start it empty so a
    # reused path cannot leak a previous run's events into the log
    events_file = Path(events_path)
    events_file.parent.mkdir(parents=True, exist_ok=True)
    events_file.write_text("", encoding="utf-8")

    env = dict(os.environ)
    env[EVENTS_ENV] = str(events_path)
    try:
        child = subprocess.Popen(args.child, env=env)
    except OSError as exc:
        print(f"cannot spawn child: {exc}", file=sys.stderr)
        return 1

    interrupted = False
    previous_handler = signal.getsignal(signal.SIGINT)

    def forward_interrupt(signum, frame):
        nonlocal interrupted
        interrupted = True
        child.send_signal(signal.SIGINT)

    signal.signal(signal.SIGINT, forward_interrupt)

    early: forecast.Forecast | None = None

    def maybe_forecast(snapshot: SampleLog) -> None:
        nonlocal early
        if early is not None or snapshot.epochs_completed() < 1:
            return
        setup, epochs = _phase_summaries(snapshot, pue, intensity.grams_per_kwh)
        if not epochs:
            return
        early = forecast.predict(epochs[:1], setup, max(planned_epochs, 1), intensity)
        print(
            f"forecast after epoch 1: {early.predicted_kwh:.3f} kWh, "
            f"{early.predicted_co2e_kg:.4f} kg CO2e, {early.predicted_duration_hours:.3f} h "
            f"for {early.planned_epochs} planned epochs"
        )

    try:
        log = run_sampler(
            probes,
            interval_ms,
            events_path,
            stop_condition=lambda: child.poll() is not None,
            on_tick=maybe_forecast,
        )
    finally:
        signal.signal(signal.SIGINT, previous_handler)
    exit_code = child.wait()

    result = energy.integrate_energy(log, pue)
    report = carbon.emissions(result.facility_kwh, intensity, car_kg_per_km=car_factor)
    setup, epochs = _phase_summaries(log, pue, intensity.grams_per_kwh)
    notes = list(log.warnings) + list(result.notes)
    if log.violations:
        notes.append(f"{log.violations} event protocol violation(s)")
    if exit_code != 0:
        notes.append("aborted")
    if interrupted:
        notes.append("interrupted")

    record = ledger.ExperimentRecord(
        experiment_id=uuid.uuid4().hex[:12],
        label=label,
        started_at=datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        duration_hours=_duration_hours(log),
        epochs_completed=log.epochs_completed(),
        energy_kwh=result.facility_kwh,
        intensity_g_per_kwh=intensity.grams_per_kwh,
        pue=pue,
        co2e_kg=report.co2e_kg,
        car_km=report.car_km,
        car_factor_kg_per_km=car_factor,
        region=region,
        phase_breakdown=tuple(([setup] if setup else []) + epochs),
        quality_notes=tuple(notes),
    )
    ledger.append_record(ledger_path, record)
    print(ledger.render_report([record], "text"), end="")
    if early is not None:
        print(
            f"forecast after epoch 1 was {early.predicted_kwh:.3f} kWh for "
            f"{early.planned_epochs} planned epochs; measured {record.energy_kwh:.3f} kWh "
            f"over {record.epochs_completed} epoch(s)"
        )
    return exit_code


def cmd_report(args: argparse.Namespace) -> int:
    ledger_path = args.ledger or os.environ.get(LEDGER_ENV) or _DEFAULTS["ledger"]
    try:
        records = ledger.read_records(ledger_path)
    except OSError as exc:
        print(f"cannot read ledger: {exc}", file=sys.stderr)
        return 2
    if args.filter:
        records = [r for r in records if args.filter in r.label or args.filter == r.experiment_id]
    try:
        document = ledger.render_report(records, args.format)
    except EmptySelection as exc:
        print(str(exc), file=sys.stderr)
        return 2
    if args.out:
        Path(args.out).write_text(document, encoding="utf-8")
    else:
        print(document, end="")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    if args.kwh_per_epoch <= 0 or args.epochs < 1:
        print("kwh-per-epoch must be > 0 and epochs >= 1", file=sys.stderr)
        return 2
    if args.intensity is not None:
        grams = args.intensity
        if grams <= 0:
            print("intensity must be > 0", file=sys.stderr)
            return 2
    else:
        registry = carbon.load_intensity_registry(args.registry or os.environ.get(REGISTRY_ENV))
        if args.region not in registry:
            print(f"region {args.region!r} not in intensity registry", file=sys.stderr)
            return 2
        grams = registry[args.region].grams_per_kwh
    kwh = args.setup_kwh + args.kwh_per_epoch * args.epochs
    report = carbon.emissions(kwh, grams, car_kg_per_km=args.car_factor)
    print(f"predicted energy: {report.energy_kwh:.3f} kWh")
    print(f"predicted co2e: {report.co2e_kg:.3f} kg")
    print(f"car equivalent: {report.car_km:.3f} km")
    return 0


def cmd_regions(args: argparse.Namespace) -> int:
    path = args.registry or os.environ.get(REGISTRY_ENV)
    try:
        registry = carbon.load_intensity_registry(path)
    except CarbonLedgerError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    for region in sorted(registry):
        entry = registry[region]
        as_of = entry.as_of.isoformat() if entry.as_of else ""
        print(f"{region} {entry.grams_per_kwh:g} {entry.source} {as_of}".rstrip())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carbonledger",
        description="Track, extrapolate, ledger, and report experiment energy and CO2e",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="spawn a workload and track it")
    run.add_argument("--label", default=None)
    run.add_argument("--region", default=None)
    run.add_argument("--pue", type=float, default=None)
    run.add_argument("--interval-ms", type=int, default=None, dest="interval_ms")
    run.add_argument("--probe", action="append", default=None, help="replay:PATH[*N] | gpu[:N] | cpu")
    run.add_argument("--fallback-probe", action="append", default=None)
    run.add_argument("--ledger", default=None)
    run.add_argument("--events", default=None)
    run.add_argument("--registry", default=None)
    run.add_argument("--planned-epochs", type=int, default=None, dest="planned_epochs")
    run.add_argument("--car-factor", type=float, default=None, dest="car_factor")
    run.add_argument("--config", default=None)
    run.add_argument("child", nargs=argparse.REMAINDER, help="-- <command> [args...]")
    run.set_defaults(func=cmd_run)

    report = sub.add_parser("report", help="render ledger records")
    report.add_argument("--ledger", default=None)
    report.add_argument("--format", choices=("text", "text-table", "csv", "json"), default="text")
    report.add_argument("--filter", default=None, help="label substring or exact experiment id")
    report.add_argument("--out", default=None)
    report.set_defaults(func=cmd_report)

    predict = sub.add_parser("predict", help="extrapolate a run from per-epoch energy")
    predict.add_argument("--kwh-per-epoch", type=float, required=True, dest="kwh_per_epoch")
    predict.add_argument("--epochs", type=int, required=True)
    predict.add_argument("--setup-kwh", type=float, default=0.0, dest="setup_kwh")
    predict.add_argument("--region", default="DE")
    predict.add_argument("--intensity", type=float, default=None, help="g/kWh, bypasses the registry")
    predict.add_argument("--registry", default=None)
    predict.add_argument("--car-factor", type=float, default=carbon.DEFAULT_CAR_KG_PER_KM)
    predict.set_defaults(func=cmd_predict)

    regions = sub.add_parser("regions", help="list known carbon intensities")
    regions.add_argument("--registry", default=None)
    regions.set_defaults(func=cmd_regions)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    child = getattr(args, "child", None)
    if child and child[0] == "--":
        args.child = child[1:]
    try:
        return args.func(args)
    except CarbonLedgerError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
