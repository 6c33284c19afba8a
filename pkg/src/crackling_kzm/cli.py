"""Command line front end: analyze, fit, simulate, predict, report.

Exit codes: 0 success (possibly with warnings), 2 usage error, 3 insufficient
data, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import json
import math
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, funcnet, kstring, kzm, profiles, quench_oracle, svgplot, waveforms
from .event_io import AnalysisConfig, ConfigError, EventFormatError, atomic_write, config_field_types, load_config
from .event_io import event_text, load_event, sniff_format
from .pipeline import EventReport, analyze_frames, event_frame_series

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MANIFEST = "run_manifest.json"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _clean(obj):
    """Recursively turn numpy scalars into Python ones and non-finite floats into None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


class Run:
    """Collects outputs and stage timings; writes the manifest last."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out = Path(args.out)
        self.outputs: dict[str, str] = {}
        self.timings: dict[str, float] = {}
        self.notes: list[str] = []
        self.errors: list[dict] = []
        self._t = time.perf_counter()

    def write(self, rel: str, data: str | bytes) -> None:
        target = self.out / rel
        if not target.resolve().is_relative_to(self.out.resolve()):
            raise CliError(f"refusing to write outside the output directory: {rel}", EXIT_USAGE)
        atomic_write(target, data)
        raw = data.encode() if isinstance(data, str) else data
        self.outputs[Path(rel).as_posix()] = hashlib.sha256(raw).hexdigest()

    def stage(self, name: str) -> None:
        now = time.perf_counter()
        self.timings[name] = round(now - self._t, 6)
        self._t = now

    @property
    def timestamp(self) -> str | None:
        if self.args.no_timestamp:
            return None
        return datetime.now(timezone.utc).isoformat(timespec="seconds")

    def finish(self, config: dict | None = None, inputs: list[str] | None = None) -> None:
        manifest = {
            "subcommand": self.args.command,
            "tool_version": __version__,
            "inputs": [{"path": p, "sha256": _sha256(p)} for p in (inputs or [])],
            "config": config,
            "output_dir": str(self.args.out),
            "rng_seed": self.args.seed,
            "outputs": [{"path": k, "sha256": v} for k, v in sorted(self.outputs.items())],
            "errors": self.errors,
            "notes": self.notes,
        }
        if not self.args.no_timestamp:
            manifest["timings"] = self.timings
            manifest["created"] = self.timestamp
        atomic_write(self.out / MANIFEST, dump_json(manifest))


def _sha256(path: str) -> str | None:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError:
        return None


# ---------------------------------------------------------------- analyze


def resolve_analysis_config(args: argparse.Namespace) -> AnalysisConfig:
    config = load_config(args.config) if args.config else AnalysisConfig()
    changes = {name: getattr(args, name) for name in config_field_types() if getattr(args, name, None) is not None}
    if args.seed is not None:
        changes["rng_seed"] = args.seed
    return config.replace(**changes)


def safe_name(event_id: str) -> str:
    """Event id reduced to a single safe path component."""
    name = re.sub(r"[^A-Za-z0-9_.-]", "_", event_id).lstrip(".")
    return name or "event"


def _load_series(path: str, config: AnalysisConfig) -> funcnet.FrameSeries:
    fmt = sniff_format(path)
    if fmt == "frames":
        return funcnet.load_frame_series(path)
    return event_frame_series(load_event(path, fmt), config)


def _event_files(rep: EventReport) -> dict[str, str]:
    series = rep.series
    files = {"report.json": dump_json(rep.to_dict()), "frames.csv": funcnet.frames_csv(series)}
    if rep.profile is not None:
        files["profile.csv"] = profiles.profile_csv(rep.profile)
    if rep.sign_rows is not None:
        xi = rep.xi if rep.xi is not None else np.full(series.n_frames, np.nan)
        files["kstring.csv"] = kstring.kstring_csv(rep.sign_rows, series.frame_indices, xi)
        seg = rep.segmentation
        tc = seg.tc_frame if seg else int(np.argmin(np.abs(rep.sign_rows.mean(axis=1))))
        files["correlation.csv"] = kstring.correlation_csv(tc, kstring.correlation(rep.sign_rows[tc]))
        snaps = [tc]
        if seg:
            snaps = sorted({seg.impulse_onset_frame, tc, seg.w_interval[1] - 1})
        files["polar.csv"] = kstring.polar_csv(snaps, series.degrees, series.angles, rep.sign_rows)
    return files


def _analyze_one(path: str, config: AnalysisConfig) -> tuple[str, dict | None, kzm.ScalingPoint | None, str | None]:
    try:
        series = _load_series(path, config)
    except (OSError, EventFormatError, funcnet.FrameError, ValueError) as exc:
        return path, None, None, f"{type(exc).__name__}: {exc}"
    rep = analyze_frames(series, config)
    return path, {"event_id": rep.event_id, "files": _event_files(rep)}, rep.scaling_point, None


def cmd_analyze(args: argparse.Namespace) -> int:
    run = Run(args)
    config = resolve_analysis_config(args)
    run.stage("setup")
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_analyze_one, args.events, [config] * len(args.events)))
    else:
        results = [_analyze_one(p, config) for p in args.events]
    run.stage("analyze")
    points: list[kzm.ScalingPoint] = []
    used: set[str] = set()
    for path, payload, point, err in results:
        if err is not None:
            run.errors.append({"input": path, "error": err})
            print(f"warning: {path}: {err}", file=sys.stderr)
            continue
        base = safe_name(payload["event_id"])
        name, n = base, 2
        while name in used:
            name = f"{base}_{n}"
            n += 1
        used.add(name)
        for fname, text in payload["files"].items():
            run.write(f"events/{name}/{fname}", text)
        points.append(point)
    if points:
        run.write("scaling.csv", kzm.scaling_csv(points))
    run.stage("write")
    run.finish(config.to_dict(), list(args.events))
    if not points:
        raise CliError("no event could be read", EXIT_DATA)
    if all(p.quality == "failed" for p in points):
        raise CliError("every event failed analysis (see per-event reports)", EXIT_DATA)
    return EXIT_OK


# ---------------------------------------------------------------- fit


def cmd_fit(args: argparse.Namespace) -> int:
    run = Run(args)
    try:
        text = Path(args.scaling).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {args.scaling}: {exc}", EXIT_USAGE) from None
    points, notes = kzm.read_scaling_csv(text)
    run.notes += notes
    positive = [p for p in points if p.ramp_rate > 0 and p.xi_frozen > 0]
    ok = kzm.usable_points(positive)
    excluded = {
        "nonpositive_or_missing": len(points) - len(positive),
        "not_ok_quality": len(positive) - len(ok),
        "unparsable": len(notes),
    }
    try:
        fit = kzm.fit_power_law(ok, args.min_points)
    except kzm.InsufficientDataError as exc:
        run.finish(None, [args.scaling])
        raise CliError(f"insufficient data: {exc}", EXIT_DATA) from None
    result = fit.to_dict() | {"n_rows": len(points), "excluded": excluded, "nu": None, "z": None}
    rh = [(p.event_id, p.rhat, p.ramp_rate) for p in ok if p.rhat is not None and p.rhat > 0]
    if len(rh) >= args.min_points:
        try:
            est = kzm.estimate_nu_z(ok, rh, args.min_points)
            result.update(nu=est.nu, z=est.z, b1=est.b1, b2=est.b2, stderr_b2=est.rhat_fit.stderr_b)
        except kzm.EstimationError as exc:
            result["nu_z_note"] = str(exc)
    else:
        result["nu_z_note"] = f"{len(rh)} ok rows carry rhat; need {args.min_points}"
    run.write("fit.json", dump_json(result))
    svg = svgplot.loglog_scatter(
        np.array([p.ramp_rate for p in ok]),
        np.array([p.xi_frozen for p in ok]),
        fit.exponent,
        fit.amplitude,
        fit.stderr_b,
        "Frozen correlation length vs ramp rate",
        "ramp rate dR/dt (1/s)",
        "frozen xi (nodes)",
        run.timestamp,
    )
    run.write("fit.svg", svg)
    run.finish({"min_points": args.min_points}, [args.scaling])
    return EXIT_OK


# ---------------------------------------------------------------- simulate


def _parse_field(name: str, annotation: str, raw: str):
    raw = raw.strip()
    if annotation.startswith("tuple"):
        return tuple(float(v) for v in raw.replace(",", " ").split())
    if "None" in annotation and raw.lower() in ("", "none"):
        return None
    if annotation.startswith("int"):
        return int(raw)
    if annotation.startswith("float"):
        return float(raw)
    return raw


def load_quench_config(path: str) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string("[config]\n" + Path(path).read_text())
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    fields = {f.name: f.type for f in dataclasses.fields(quench_oracle.QuenchConfig)}
    out = {}
    for key, raw in parser["config"].items():
        name = key.replace("-", "_")
        if name not in fields:
            raise ConfigError(f"{path}: unknown key {key!r}")
        try:
            out[name] = _parse_field(name, str(fields[name]), raw)
        except ValueError:
            raise ConfigError(f"{path}: cannot parse {key} = {raw!r}") from None
    return out


def resolve_quench_config(args: argparse.Namespace) -> quench_oracle.QuenchConfig:
    values = load_quench_config(args.config) if args.config else {}
    values["model"] = args.model
    if args.seed is not None:
        values["rng_seed"] = args.seed
    direct = ("chain_length", "reps", "dt", "noise_amplitude", "xi_noise", "plateau_length", "programmed_exponent")
    for name in direct:
        if getattr(args, name) is not None:
            values[name] = getattr(args, name)
    if args.tau_q:
        values["tau_q"] = tuple(args.tau_q)
    if args.rates is not None or args.rate_min is not None or args.rate_max is not None:
        lo = 1e5 if args.rate_min is None else args.rate_min
        hi = 1e7 if args.rate_max is None else args.rate_max
        n = 30 if args.rates is None else args.rates
        values["ramp_rates"] = tuple(np.geomspace(lo, hi, n).tolist())
    return quench_oracle.QuenchConfig(**values)


def cmd_simulate(args: argparse.Namespace) -> int:
    run = Run(args)
    config = resolve_quench_config(args)
    run.stage("setup")
    if config.model == "constructed":
        series, truths = quench_oracle.generate_constructed(config)
        run.stage("generate")
        for s, t in zip(series, truths):
            run.write(f"events/{s.event_id}.frames.csv", funcnet.frame_series_text(s))
            run.write(f"truth/{s.event_id}.json", dump_json(t.to_dict()))
        if args.waveforms:
            seed = config.rng_seed
            event, truth = waveforms.waveform_event(seed)
            run.write(f"events/{event.event_id}.csv", event_text(event))
            run.write(f"truth/{event.event_id}.json", dump_json(dataclasses.asdict(truth)))
    else:
        try:
            sweep = quench_oracle.kink_density_sweep(config, args.jobs)
        except kzm.InsufficientDataError as exc:
            raise CliError(f"insufficient data: {exc}", EXIT_DATA) from None
        run.stage("simulate")
        rows = ["tau_Q,rep,kinks"]
        for ti, tq in enumerate(sweep.tau_q):
            rows += [f"{float(tq)!r},{r},{int(k)}" for r, k in enumerate(sweep.run.kinks[ti])]
        run.write("sweep.csv", "\n".join(rows) + "\n")
        fit = sweep.fit.to_dict() | {
            "tau_Q": sweep.tau_q,
            "mean_kinks": sweep.mean_kinks,
            "sem_kinks": sweep.sem_kinks,
            "monotone": sweep.monotone(),
            "predicted": kzm.kzm_exponent(kzm.KzmParams(nu=0.5, z=2.0)),
        }
        run.write("sweep_fit.json", dump_json(fit))
    run.stage("write")
    run.finish(config.to_dict())
    return EXIT_OK


# ---------------------------------------------------------------- predict


def cmd_predict(args: argparse.Namespace) -> int:
    run = Run(args)
    try:
        params = kzm.KzmParams(args.nu, args.z, args.tau0, args.xi0)
        rows = [kzm.predict(params, ts) for ts in args.tau_s]
    except ZeroDivisionError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from None
    text = dump_json({"predictions": rows})
    run.write("predict.json", text)
    run.finish(dataclasses.asdict(params) | {"tau_s": list(args.tau_s)})
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- report


def _read_csv(path: Path) -> dict[str, np.ndarray] | None:
    if not path.exists():
        return None
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return None
    cols = {}
    for key in rows[0]:
        cols[key] = np.array([float(r[key]) if r[key] not in ("", None) else np.nan for r in rows])
    return cols


def _event_dirs(paths: list[str]) -> list[Path]:
    dirs = []
    for p in map(Path, paths):
        if (p / "report.json").exists():
            dirs.append(p)
        else:
            dirs += sorted(d.parent for d in p.glob("events/*/report.json"))
    return dirs


def render_event(run: Run, d: Path) -> int:
    report = json.loads((d / "report.json").read_text())
    name = d.name
    seg = report.get("segmentation")
    prof = _read_csv(d / "profile.csv")
    ks = _read_csv(d / "kstring.csv")
    polar = _read_csv(d / "polar.csv")
    stamp = run.timestamp
    written = 0

    def frame_time(t, j):
        return float(t[min(j, len(t) - 1)]) * 1e6

    if prof is None:
        run.notes.append(f"{name}: profile.csv missing; R and invlogBC panels skipped")
    else:
        t = prof["time"] * 1e6
        shading = []
        if seg:
            for label in ("S", "W", "D"):
                a, b = seg[f"{label.lower()}_interval"]
                if b > a:
                    shading.append((frame_time(prof["time"], a), frame_time(prof["time"], b - 1), label))
        marks = [seg["t_c"] * 1e6] if seg else []
        svg = svgplot.line_panel(t, [("R(t)", prof["R"])], f"{name}: R profile", "time (us)", "R = Q0/Q",
                                 shading, marks, timestamp=stamp)
        run.write(f"{name}/r_profile.svg", svg)
        imp = [(frame_time(prof["time"], a), frame_time(prof["time"], b - 1), "impulse")
               for a, b in report.get("impulse_intervals", [])]
        svg = svgplot.line_panel(t, [("1/log<BC>", prof["invlogBC"])], f"{name}: betweenness impulse",
                                 "time (us)", "1/log<BC>", imp, timestamp=stamp)
        run.write(f"{name}/invlogbc.svg", svg)
        written += 2
    if ks is None or prof is None:
        run.notes.append(f"{name}: kstring.csv missing; m and xi panels skipped")
    else:
        t = prof["time"] * 1e6
        marks = [seg["t_c"] * 1e6] if seg else []
        svg = svgplot.line_panel(t, [("m(t)", ks["m"])], f"{name}: order parameter", "time (us)", "m = <s>",
                                 marks=marks, timestamp=stamp)
        run.write(f"{name}/order_parameter.svg", svg)
        freeze = report.get("freeze") or {}
        shading, note = [], None
        if freeze.get("found"):
            a, b = freeze["plateau_frames"]
            shading = [(frame_time(prof["time"], a), frame_time(prof["time"], b - 1), "plateau")]
        else:
            note = "no plateau"
        svg = svgplot.line_panel(t, [("xi(t)", ks["xi"])], f"{name}: correlation length", "time (us)",
                                 "xi (nodes)", shading, marks, note=note, timestamp=stamp)
        run.write(f"{name}/xi.svg", svg)
        written += 2
    if polar is None:
        run.notes.append(f"{name}: polar.csv missing; K-string panel skipped")
    else:
        frames = polar["frame"].astype(int)
        target = seg["tc_frame"] if seg and seg["tc_frame"] in frames else int(frames[0])
        sel = frames == target
        svg = svgplot.polar_snapshot(polar["k"][sel], polar["theta"][sel], polar["sign"][sel],
                                     f"{name}: K-string at frame {target}", stamp)
        run.write(f"{name}/polar.svg", svg)
        written += 1
    return written


def cmd_report(args: argparse.Namespace) -> int:
    run = Run(args)
    dirs = _event_dirs(args.inputs)
    if not dirs:
        run.finish(None, list(args.inputs))
        raise CliError("no report.json found under the given paths", EXIT_DATA)
    for d in dirs:
        render_event(run, d)
    run.finish(None, [str(d / "report.json") for d in dirs])
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--out", default="kzm_out", help="output directory (default: kzm_out)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--seed", type=int, default=None, help="RNG seed")
    common.add_argument("--no-timestamp", action="store_true", help="omit timestamps from SVGs and the manifest")

    parser = argparse.ArgumentParser(prog="kzm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="analyze event or frame files")
    p.add_argument("events", nargs="+", help="waveform event files (CSV or binary) or frame files")
    for name, kind in config_field_types().items():
        if name == "rng_seed":
            continue
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind, default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fit", parents=[common], help="fit the scaling cloud")
    p.add_argument("scaling", help="scaling CSV written by analyze")
    p.add_argument("--min-points", type=int, default=5)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", parents=[common], help="generate synthetic ground truth")
    p.add_argument("--model", choices=("constructed", "phi4"), default="constructed")
    p.add_argument("--chain-length", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--noise-amplitude", type=float)
    p.add_argument("--tau-q", type=float, nargs="+")
    p.add_argument("--rates", type=int, help="number of ramp rates")
    p.add_argument("--rate-min", type=float)
    p.add_argument("--rate-max", type=float)
    p.add_argument("--xi-noise", type=float)
    p.add_argument("--plateau-length", type=int)
    p.add_argument("--programmed-exponent", type=float)
    p.add_argument("--waveforms", action="store_true", help="also write a raw waveform event")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("predict", parents=[common], help="closed-form KZM predictions")
    p.add_argument("--nu", type=float, default=0.5)
    p.add_argument("--z", type=float, default=1.0)
    p.add_argument("--tau0", type=float, default=1.0)
    p.add_argument("--xi0", type=float, default=1.0)
    p.add_argument("--tau-s", type=float, nargs="+", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", parents=[common], help="render SVG panels from analyze output")
    p.add_argument("inputs", nargs="+", help="event report directories or an analyze output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, quench_oracle.OracleConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (quench_oracle.Phi4BlowUpError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
