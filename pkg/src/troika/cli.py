"""Command-line front end: ``troika run|synth|spectrum|metrics|sweep``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics
from ._validation import ParameterError, samples_per
from .estimator import TroikaHeartRate
from .ingest import (
    ArtifactTone,
    SynthSpec,
    generate_synthetic,
    load_recording,
    n_windows,
    save_recording,
    windows,
)

log = logging.getLogger("troika")

TRACE_COLUMNS = (
    "window_index",
    "t_start_s",
    "bpm_est",
    "bpm_true",
    "abs_err",
    "case",
    "rule1_fired",
    "rule2_fired",
)
TRUTH_SUFFIX = "_bpm_truth.csv"
SWEEP_PARAMS = {
    "L": "ssa_length",
    "delta": "guard_bins",
    "tau": "tau",
    "delta_s": "delta_s",
}
SWEEP_ALIASES = {"Δ": "delta", "Delta": "delta", "Δs": "delta_s", "delta-s": "delta_s", "l": "L"}


@dataclass(frozen=True)
class RunConfig:
    fs: float = 125.0
    window_seconds: float = 8.0
    step_seconds: float = 2.0
    ssa_length: int = 400
    guard_bins: int = 10
    n_bins: int = 4096
    p: float = 0.8
    lam: float = 0.1
    iters: int = 5
    delta_s: int = 16
    eta_ratio: float = 0.3
    theta: int = 6
    tau: int = 2
    h: int = 3
    skip_ssa: bool = False
    use_periodogram: bool = False
    skip_verify: bool = False
    init: str = "first-window"
    init_bpm: float | None = None
    input_dir: Path | None = None
    output_dir: Path | None = None
    jobs: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("fs", "window_seconds", "step_seconds", "ssa_length", "n_bins", "p", "iters",
                     "delta_s", "eta_ratio", "theta", "h"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lam < 0 or self.tau < 0 or self.guard_bins < 0:
            raise ParameterError("lam, tau and guard_bins must be >= 0")
        samples_per(self.window_seconds, self.fs, "window_seconds")
        if self.step_seconds > self.window_seconds:
            raise ParameterError("step_seconds must not exceed window_seconds")

    def estimator(self):
        return TroikaHeartRate(
            fs=self.fs,
            window_seconds=self.window_seconds,
            step_seconds=self.step_seconds,
            ssa_length=self.ssa_length,
            guard_bins=self.guard_bins,
            n_bins=self.n_bins,
            p=self.p,
            lam=self.lam,
            iters=self.iters,
            delta_s=self.delta_s,
            eta_ratio=self.eta_ratio,
            theta=self.theta,
            tau=self.tau,
            h=self.h,
            use_ssa=not self.skip_ssa,
            use_sparse=not self.use_periodogram,
            verify=not self.skip_verify,
            init=self.init,
            init_bpm=self.init_bpm,
            **self.extra,
        ).fit()


# -- files -------------------------------------------------------------------


def recording_paths(input_dir):
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise FileNotFoundError(f"input directory {input_dir} does not exist")
    return sorted(p for p in input_dir.glob("*.csv") if not p.name.endswith(TRUTH_SUFFIX))


def read_truth(path):
    """``window_index,bpm`` rows into a dict."""
    out = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"window_index", "bpm"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns window_index,bpm")
        for row in reader:
            out[int(row["window_index"])] = float(row["bpm"])
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.4f}"


def write_trace(estimates, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for e in estimates:
            writer.writerow(
                [
                    _fmt(e.window_index),
                    _fmt(e.t_start),
                    _fmt(e.bpm_est),
                    _fmt(e.bpm_true),
                    _fmt(e.abs_err),
                    _fmt(e.case),
                    _fmt(e.rule1_fired),
                    _fmt(e.rule2_fired),
                ]
            )


def read_trace(path):
    """(est, true) arrays from a trace CSV, keeping only windows with truth."""
    est, true = [], []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["bpm_true"]:
                est.append(float(row["bpm_est"]))
                true.append(float(row["bpm_true"]))
    return np.array(est), np.array(true)


def write_json(obj, path):
    text = json.dumps(obj, indent=2, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def metrics_dict(est, true, n_windows=None):
    if len(est) == 0:
        keys = ("error1_bpm", "error2_pct", "loa_low", "loa_high", "sigma_bpm", "pearson_r")
        return {**{k: None for k in keys}, "n_windows": int(n_windows or 0)}
    return metrics.summarize(est, true).to_json_dict()


# -- pipeline over a directory -------------------------------------------------


def process_recording(path, config):
    """Estimate one recording; returns ``(stem, estimates)``."""
    path = Path(path)
    rec = load_recording(path, fs=config.fs)
    truth = None
    truth_file = path.with_name(path.stem + TRUTH_SUFFIX)
    est = config.estimator()
    if truth_file.exists():
        table = read_truth(truth_file)
        count = n_windows(len(rec), config.fs, config.window_seconds, config.step_seconds)
        truth = [table.get(i) for i in range(count)]
    return path.stem, est.estimate(rec, truth=truth)


def _job(args):
    path, config = args
    try:
        return process_recording(path, config), None
    except Exception as exc:  # reported per file; the batch continues
        msg = str(exc)
        return (Path(path).stem, None), msg if str(path) in msg else f"{path}: {msg}"


def _jobs(config):
    env = os.environ.get("TROIKA_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer TROIKA_JOBS=%r", env)
    return max(1, int(config.jobs))


def process_directory(config):
    """Run every recording in ``config.input_dir``.

    Returns ``(results, errors)`` where `results` maps stem to estimates, in
    file-name order.
    """
    paths = recording_paths(config.input_dir)
    if not paths:
        raise FileNotFoundError(f"no recording CSVs in {config.input_dir}")
    tasks = [(p, config) for p in paths]
    jobs = min(_jobs(config), len(tasks))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_job, tasks))
    else:
        outcomes = [_job(t) for t in tasks]
    results, errors = {}, []
    for (stem, ests), err in outcomes:
        if err is not None:
            errors.append(err)
        else:
            results[stem] = ests
    return results, errors


def _pairs(ests):
    kept = [(e.bpm_est, e.bpm_true) for e in ests if e.bpm_true is not None]
    if not kept:
        return np.array([]), np.array([])
    est, true = zip(*kept)
    return np.array(est), np.array(true)


def aggregate_dict(results):
    pairs = [_pairs(ests) for ests in results.values()]
    with_truth = [p for p in pairs if len(p[0])]
    if not with_truth:
        out = metrics_dict([], [], sum(len(e) for e in results.values()))
    else:
        out = metrics.aggregate(with_truth).to_json_dict()
    out["n_recordings"] = len(results)
    return out


def run(config):
    results, errors = process_directory(config)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for stem, ests in results.items():
        write_trace(ests, out_dir / f"{stem}_trace.csv")
        est, true = _pairs(ests)
        write_json(metrics_dict(est, true, len(ests)), out_dir / f"{stem}_metrics.json")
    if results:
        write_json(aggregate_dict(results), out_dir / "metrics.json")
    return results, errors


def sweep(config, param, values):
    """Aggregate Error1/Error2 for each value of one tracker/SSA parameter."""
    key = SWEEP_ALIASES.get(param, param)
    if key not in SWEEP_PARAMS:
        raise ParameterError(f"cannot sweep {param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    rows = []
    for value in values:
        cfg = replace(config, **{SWEEP_PARAMS[key]: value})
        results, errors = process_directory(cfg)
        for err in errors:
            log.error("%s", err)
        if not results:
            raise RuntimeError(f"every recording failed for {key}={value}")
        agg = aggregate_dict(results)
        rows.append((value, agg["error1_bpm"], agg["error2_pct"]))
    return rows


# -- argument parsing ----------------------------------------------------------


def _add_pipeline_args(p):
    g = p.add_argument_group("pipeline parameters")
    g.add_argument("--fs", type=float, default=125.0, help="sampling rate in Hz (default 125)")
    g.add_argument("--window-seconds", "--T", type=float, default=8.0, dest="window_seconds")
    g.add_argument("--step-seconds", "--S", type=float, default=2.0, dest="step_seconds")
    g.add_argument("--ssa-length", "--L", type=int, default=400, dest="ssa_length")
    g.add_argument("--guard-bins", "--delta", type=int, default=10, dest="guard_bins")
    g.add_argument("--n-bins", "--N", type=int, default=4096, dest="n_bins")
    g.add_argument("--p", type=float, default=0.8)
    g.add_argument("--lam", "--lambda", type=float, default=0.1, dest="lam")
    g.add_argument("--iters", type=int, default=5)
    g.add_argument("--delta-s", type=int, default=16, dest="delta_s")
    g.add_argument("--eta-ratio", type=float, default=0.3, dest="eta_ratio")
    g.add_argument("--theta", type=int, default=6)
    g.add_argument("--tau", type=int, default=2)
    g.add_argument("--h", type=int, default=3)
    g.add_argument("--skip-ssa", action="store_true", help="ablation: no SSA artifact removal")
    g.add_argument(
        "--use-periodogram", action="store_true", help="ablation: periodogram instead of FOCUSS"
    )
    g.add_argument("--skip-verify", action="store_true", help="ablation: no verification rules")
    g.add_argument(
        "--init",
        choices=("first-window", "truth"),
        default="first-window",
        help="first-window assumes the wearer is still at the start; "
        "truth seeds from the first window's ground truth",
    )
    g.add_argument("--init-bpm", type=float, default=None, help="explicit starting BPM for --init truth")


def _config(args, **over):
    fields = {f for f in RunConfig.__dataclass_fields__}
    kw = {k: v for k, v in vars(args).items() if k in fields}
    kw.update(over)
    return RunConfig(**kw)


def _parse_knots(text, name):
    knots = []
    for part in text.split(","):
        try:
            t, v = part.split(":")
            knots.append((float(t), float(v)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name}: expected t:value[,t:value...], got {text!r}")
    return knots


def _parse_tone(text):
    """``FREQ@AMP`` or ``t:f,t:f,...@AMP``."""
    freq, _, amp = text.partition("@")
    amplitude = float(amp) if amp else 1.0
    if ":" in freq:
        return ArtifactTone(tuple(_parse_knots(freq, "--tone")), amplitude)
    return ArtifactTone(float(freq), amplitude)


def build_parser():
    parser = argparse.ArgumentParser(prog="troika", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="estimate heart rate for every recording in a directory")
    p.add_argument("input_dir", type=Path)
    p.add_argument("-o", "--output-dir", type=Path, required=True, dest="output_dir")
    p.add_argument("-j", "--jobs", type=int, default=1, help="parallel recordings (TROIKA_JOBS overrides)")
    _add_pipeline_args(p)

    p = sub.add_parser("synth", help="write a synthetic recording with known heart rate")
    p.add_argument("output", type=Path)
    p.add_argument("--duration", type=float, default=300.0)
    p.add_argument("--hr", default="0:70,150:160,300:90", help="BPM knots t:bpm,...")
    p.add_argument("--tone", action="append", default=[], help="artifact tone FREQ@AMP or t:f,...@AMP")
    noise = p.add_mutually_exclusive_group()
    noise.add_argument("--noise-std", type=float, default=0.0)
    noise.add_argument("--snr-db", type=float, default=None, help="noise level relative to the pulse train")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fs", type=float, default=125.0)
    p.add_argument("--truth", action="store_true", help=f"also write <stem>{TRUTH_SUFFIX}")

    p = sub.add_parser("spectrum", help="dump the spectrum of one window as bin,hz,power CSV")
    p.add_argument("recording", type=Path)
    p.add_argument("--window", type=int, default=0)
    p.add_argument("-o", "--output", type=Path, default=None)
    _add_pipeline_args(p)

    p = sub.add_parser("metrics", help="agreement metrics from one or more trace CSVs")
    p.add_argument("traces", type=Path, nargs="+")
    p.add_argument("-o", "--output", type=Path, default=None)

    p = sub.add_parser("sweep", help="Error1/Error2 over values of one parameter")
    p.add_argument("input_dir", type=Path)
    p.add_argument("--param", required=True, help=f"one of {', '.join(SWEEP_PARAMS)}")
    p.add_argument("--values", required=True, help="comma-separated integers")
    p.add_argument("-o", "--output", type=Path, default=None)
    p.add_argument("-j", "--jobs", type=int, default=1)
    _add_pipeline_args(p)
    return parser


def _cmd_run(args):
    results, errors = run(_config(args))
    for err in errors:
        print(f"error: {err}", file=sys.stderr)
    if not results:
        print("error: every recording failed", file=sys.stderr)
        return 1
    agg = json.loads((Path(args.output_dir) / "metrics.json").read_text(encoding="utf-8"))
    print(f"processed {len(results)} recording(s), {len(errors)} failed; "
          f"error1={agg['error1_bpm']} BPM")
    return 0


def _cmd_synth(args):
    hr = _parse_knots(args.hr, "--hr")
    tones = [_parse_tone(t) for t in args.tone]
    noise_std = args.noise_std
    if args.snr_db is not None:
        clean = generate_synthetic(SynthSpec(args.duration, hr, fs=args.fs, seed=args.seed))
        pulse = clean.ppg - clean.ppg.mean()
        noise_std = float(np.sqrt(np.mean(pulse**2)) / 10 ** (args.snr_db / 20))
    spec = SynthSpec(args.duration, hr, tones, noise_std, args.seed, args.fs)
    rec = generate_synthetic(spec)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    save_recording(rec, args.output)
    if args.truth:
        frames = windows(rec)
        truths = metrics.window_truths(rec.ecg, rec.fs, [w.start_sample for w in frames], len(frames[0]))
        path = args.output.with_name(args.output.stem + TRUTH_SUFFIX)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["window_index", "bpm"])
            for i, b in enumerate(truths):
                if b is not None:
                    w.writerow([i, f"{b:.4f}"])
    print(f"wrote {args.output} ({len(rec)} samples)")
    return 0


def _cmd_spectrum(args):
    config = _config(args)
    rec = load_recording(args.recording, fs=config.fs)
    ests, spectra = config.estimator().estimate(rec, return_spectra=True)
    if not 0 <= args.window < len(spectra):
        raise ParameterError(f"window {args.window} out of range [0, {len(spectra) - 1}]")
    bins, hz, values = spectra[args.window].physical()
    out = open(args.output, "w", newline="", encoding="utf-8") if args.output else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["bin", "hz", "power"])
        for b, f, v in zip(bins, hz, values):
            w.writerow([int(b), f"{f:.6f}", repr(float(v))])
    finally:
        if args.output:
            out.close()
    return 0


def _cmd_metrics(args):
    pairs = [read_trace(p) for p in args.traces]
    if len(pairs) == 1:
        out = metrics_dict(*pairs[0])
    else:
        with_truth = [p for p in pairs if len(p[0])]
        out = metrics.aggregate(with_truth).to_json_dict() if with_truth else metrics_dict([], [])
        out["n_recordings"] = len(pairs)
    if args.output:
        write_json(out, args.output)
    else:
        sys.stdout.write(json.dumps(out, indent=2) + "\n")
    return 0


def _cmd_sweep(args):
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ParameterError(f"--values must be comma-separated integers, got {args.values!r}")
    rows = sweep(_config(args), args.param, values)
    out = open(args.output, "w", newline="", encoding="utf-8") if args.output else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["value", "error1", "error2"])
        for v, e1, e2 in rows:
            w.writerow([v, _fmt(e1), _fmt(e2)])
    finally:
        if args.output:
            out.close()
    return 0


COMMANDS = {
    "run": _cmd_run,
    "synth": _cmd_synth,
    "spectrum": _cmd_spectrum,
    "metrics": _cmd_metrics,
    "sweep": _cmd_sweep,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s"
    )
    try:
        return COMMANDS[args.command](args)
    except (ParameterError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:  # e.g. piped into `head`
        sys.stderr.close()
        return 0


if __name__ == "__main__":
    sys.exit(main())
