"""Command-line surface: evaluation reports, liftergrams, synthetic fixtures.

Subcommands
    tc DIR          timbral-consistency measure for an instrument directory
    pitch PATH      per-frame (file) or per-sample (directory) f0 estimates
    mad DIR         pitch-accuracy report against filename targets
    report DIR      union of tc and mad, with tool/version/config echo
    liftergram FILE liftered log-mel matrix as CSV
    synth           render a synthetic instrument into a directory

All reports are JSON with a "schema": 1 field. Success exits 0; an
evaluation error exits 1 with machine-readable JSON on stderr; usage
errors exit 2. Output is byte-identical for identical inputs and flags
regardless of --threads.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .dsp import ScaleConfig, build_lifter, build_mel_filterbank, liftered_logmel
from .errors import InstrumentEvalError
from .instrument import load_instrument, load_wav
from .pitch import YinConfig, hz_to_midi, mad_report, median_pitch, yin_f0
from .synth import SynthProfile, synth_instrument, write_instrument
from .tc import TcConfig, tc_measure, tc_pair_matrix_export

SCHEMA = 1
THREADS_ENV = "INSTRUMENT_EVAL_THREADS"


def _dump(obj):
    return json.dumps(obj, indent=2) + "\n"


def _write_text(output, text):
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _emit_error(exc):
    payload = {"schema": SCHEMA, "error": type(exc).__name__, "message": str(exc)}
    sys.stderr.write(_dump(payload))


def _resolve_threads(value):
    if value is None:
        value = os.environ.get(THREADS_ENV)
    if value is None or value == "auto":
        return None
    return int(value)


def _parse_int_set(text):
    """Accept '48:72' (inclusive range), '25,50,75', or a single integer."""
    if ":" in text:
        lo, hi = text.split(":", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(tok) for tok in text.split(","))


# ---------------------------------------------------------------------------
# Config assembly
# ---------------------------------------------------------------------------


def _scale_from_dict(d):
    return ScaleConfig(
        fft_size=int(d.get("fft", 2048)),
        hop_size=int(d.get("hop", 512)),
        mel_bands=int(d.get("mel", 80)),
        lifter_order=int(d.get("mfcc", 13)),
        power=float(d.get("power", 1.0)),
        log_floor=float(d.get("eps", 1e-5)),
    )


def _scale_to_dict(sc):
    return {
        "fft": sc.fft_size,
        "hop": sc.hop_size,
        "mel": sc.mel_bands,
        "mfcc": sc.lifter_order,
        "power": sc.power,
        "eps": sc.log_floor,
    }


def _tc_config(args):
    if getattr(args, "scales", None):
        entries = json.loads(Path(args.scales).read_text())
        scales = tuple(_scale_from_dict(e) for e in entries)
    else:
        scales = (
            ScaleConfig(
                fft_size=args.fft,
                hop_size=args.hop,
                mel_bands=args.mel,
                lifter_order=args.mfcc,
                power=args.power,
                log_floor=args.eps,
            ),
        )
    return TcConfig(
        scales=scales,
        normalization=args.normalize,
        exclude_dc=args.exclude_dc,
    )


def _yin_config(args):
    return YinConfig(
        frame_size=args.frame,
        hop_size=args.yin_hop,
        threshold=args.threshold,
        f_min=args.fmin,
        f_max=args.fmax,
    )


def _tc_config_echo(cfg):
    return {
        "scales": [_scale_to_dict(sc) for sc in cfg.scales],
        "normalization": cfg.normalization,
        "exclude_dc": cfg.exclude_dc,
    }


def _yin_config_echo(cfg, mode=None):
    echo = {
        "frame": cfg.frame_size,
        "hop": cfg.hop_size,
        "threshold": cfg.threshold,
        "fmin": cfg.f_min,
        "fmax": cfg.f_max,
    }
    if mode is not None:
        echo["mode"] = mode
    return echo


def _maybe_print_config(args, config):
    if getattr(args, "print_config", False):
        _write_text(args.output, _dump({"schema": SCHEMA, "command": args.command, "config": config}))
        return True
    return False


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_tc(args):
    cfg = _tc_config(args)
    config_echo = {"tc": _tc_config_echo(cfg), "threads": args.threads}
    if _maybe_print_config(args, config_echo):
        return 0
    inst = load_instrument(args.input)
    res = tc_measure(inst, cfg, threads=_resolve_threads(args.threads))
    pair_file = None
    if args.pair_matrix:
        Path(args.pair_matrix).write_text(tc_pair_matrix_export(res))
        pair_file = args.pair_matrix
    obj = {"schema": SCHEMA, **res.to_json_dict(pair_matrix_file=pair_file)}
    _write_text(args.output, _dump(obj))
    return 0


def _frame_list(f0):
    return [None if f != f else float(f) for f in f0.tolist()]


def _cmd_pitch(args):
    cfg = _yin_config(args)
    config_echo = {"yin": _yin_config_echo(cfg), "threads": args.threads}
    if _maybe_print_config(args, config_echo):
        return 0
    path = Path(args.input)
    if path.is_dir():
        inst = load_instrument(path)
        per_sample = []
        for key in inst.keys():
            f0 = median_pitch(yin_f0(inst[key].samples, inst.sample_rate, cfg))
            per_sample.append(
                {
                    "pitch": key[0],
                    "velocity": key[1],
                    "f0_hz": f0,
                    "midi_est": None if f0 is None else hz_to_midi(f0),
                }
            )
        obj = {"schema": SCHEMA, "per_sample": per_sample}
    else:
        data, rate = load_wav(path)
        frames = yin_f0(data, rate, cfg)
        f0 = median_pitch(frames)
        obj = {
            "schema": SCHEMA,
            "file": path.name,
            "rate": rate,
            "frames": _frame_list(frames),
            "median_f0_hz": f0,
            "midi_est": None if f0 is None else hz_to_midi(f0),
        }
    _write_text(args.output, _dump(obj))
    return 0


def _cmd_mad(args):
    cfg = _yin_config(args)
    mode = "mean_abs" if args.mode == "mean" else "median_abs"
    config_echo = {"yin": _yin_config_echo(cfg, mode), "threads": args.threads}
    if _maybe_print_config(args, config_echo):
        return 0
    inst = load_instrument(args.input)
    report = mad_report(inst, cfg, mode=mode, threads=_resolve_threads(args.threads))
    obj = {"schema": SCHEMA, **report.to_json_dict()}
    _write_text(args.output, _dump(obj))
    return 0


def _cmd_report(args):
    tc_cfg = _tc_config(args)
    yin_cfg = _yin_config(args)
    mode = "mean_abs" if args.mode == "mean" else "median_abs"
    config_echo = {"tc": _tc_config_echo(tc_cfg), "yin": _yin_config_echo(yin_cfg, mode)}
    if _maybe_print_config(args, {**config_echo, "threads": args.threads}):
        return 0
    inst = load_instrument(args.input)
    threads = _resolve_threads(args.threads)
    res = tc_measure(inst, tc_cfg, threads=threads)
    pitch = mad_report(inst, yin_cfg, mode=mode, threads=threads)
    pair_file = None
    if args.pair_matrix:
        Path(args.pair_matrix).write_text(tc_pair_matrix_export(res))
        pair_file = args.pair_matrix
    obj = {
        "schema": SCHEMA,
        "tool": "instrument-eval",
        "version": __version__,
        "config": config_echo,
        **res.to_json_dict(pair_matrix_file=pair_file),
        **pitch.to_json_dict(),
    }
    _write_text(args.output, _dump(obj))
    return 0


def _cmd_liftergram(args):
    sc = ScaleConfig(
        fft_size=args.fft,
        hop_size=args.hop,
        mel_bands=args.mel,
        lifter_order=args.m,
        power=args.power,
        log_floor=args.eps,
    )
    if _maybe_print_config(args, {"scale": _scale_to_dict(sc)}):
        return 0
    data, rate = load_wav(args.input)
    fb = build_mel_filterbank(sc, rate)
    lb = build_lifter(sc)
    feat = liftered_logmel(data, sc, fb, lb)
    bands, frames = feat.y.shape
    header = (
        f"# bands={bands} frames={frames} m={sc.lifter_order}"
        f" fft={sc.fft_size} hop={sc.hop_size} rate={rate}"
    )
    rows = [",".join(repr(float(v)) for v in row) for row in feat.y]
    _write_text(args.output, header + "\n" + "\n".join(rows) + "\n")
    return 0


def _cmd_synth(args):
    profile = SynthProfile(
        mode=args.mode,
        pitch_set=_parse_int_set(args.pitches),
        velocity_set=_parse_int_set(args.velocities),
        n_harmonics=args.harmonics,
        decay_s=args.decay,
        detune_semitones=args.detune,
        seed=args.seed,
        duration_s=args.duration,
        sample_rate=args.rate,
        instrument_id=args.id,
    )
    if _maybe_print_config(args, {"synth": vars(args) and _profile_echo(profile)}):
        return 0
    inst = synth_instrument(profile)
    paths = write_instrument(inst, args.out, subtype=args.subtype)
    obj = {
        "schema": SCHEMA,
        "out": str(args.out),
        "files": len(paths),
        "mode": profile.mode,
        "seed": profile.seed,
        "rate": profile.sample_rate,
    }
    _write_text(args.output, _dump(obj))
    return 0


def _profile_echo(profile):
    return {
        "mode": profile.mode,
        "pitches": list(profile.pitch_set),
        "velocities": list(profile.velocity_set),
        "harmonics": profile.n_harmonics,
        "decay": profile.decay_s,
        "detune": profile.detune_semitones,
        "seed": profile.seed,
        "duration": profile.duration_s,
        "rate": profile.sample_rate,
        "id": profile.instrument_id,
    }


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(sub):
    sub.add_argument("-o", "--output", default=None, help="output path (default stdout)")
    sub.add_argument("--threads", default=None, help=f"worker count or 'auto' (env {THREADS_ENV})")
    sub.add_argument("--print-config", action="store_true", help="echo resolved config and exit")


def _add_tc_flags(sub):
    sub.add_argument("--fft", type=int, default=2048)
    sub.add_argument("--hop", type=int, default=512)
    sub.add_argument("--mel", type=int, default=80)
    sub.add_argument("--mfcc", type=int, default=13)
    sub.add_argument("--power", type=float, default=1.0)
    sub.add_argument("--eps", type=float, default=1e-5)
    sub.add_argument("--scales", default=None, help="JSON file with a list of scale configs")
    sub.add_argument("--normalize", choices=("mean", "none"), default="mean")
    sub.add_argument("--exclude-dc", action="store_true", dest="exclude_dc")
    sub.add_argument("--pair-matrix", default=None, help="write the KxK pair-distance CSV here")


def _add_yin_flags(sub, hop_flag="--hop"):
    sub.add_argument("--frame", type=int, default=4096)
    sub.add_argument(hop_flag, type=int, default=1024, dest="yin_hop")
    sub.add_argument("--threshold", type=float, default=0.10)
    sub.add_argument("--fmin", type=float, default=25.0)
    sub.add_argument("--fmax", type=float, default=4400.0)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="instrument-eval",
        description="Evaluate sample-based instruments: timbral consistency and pitch accuracy.",
    )
    parser.add_argument("--version", action="version", version=f"instrument-eval {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    tc = commands.add_parser("tc", help="timbral-consistency measure for a directory")
    tc.add_argument("input", metavar="DIR")
    _add_tc_flags(tc)
    _add_common(tc)
    tc.set_defaults(func=_cmd_tc)

    pitch = commands.add_parser("pitch", help="YIN f0 estimates for a file or directory")
    pitch.add_argument("input", metavar="FILE|DIR")
    _add_yin_flags(pitch)
    _add_common(pitch)
    pitch.set_defaults(func=_cmd_pitch)

    mad = commands.add_parser("mad", help="pitch-accuracy report for a directory")
    mad.add_argument("input", metavar="DIR")
    _add_yin_flags(mad)
    mad.add_argument("--mode", choices=("mean", "median"), default="mean")
    _add_common(mad)
    mad.set_defaults(func=_cmd_mad)

    report = commands.add_parser("report", help="tc + mad in one JSON report")
    report.add_argument("input", metavar="DIR")
    _add_tc_flags(report)
    _add_yin_flags(report, hop_flag="--yin-hop")
    report.add_argument("--mode", choices=("mean", "median"), default="mean")
    _add_common(report)
    report.set_defaults(func=_cmd_report)

    lift = commands.add_parser("liftergram", help="liftered log-mel matrix as CSV")
    lift.add_argument("input", metavar="FILE")
    lift.add_argument("--m", type=int, default=13, help="retained cepstral coefficients")
    lift.add_argument("--fft", type=int, default=2048)
    lift.add_argument("--hop", type=int, default=512)
    lift.add_argument("--mel", type=int, default=80)
    lift.add_argument("--power", type=float, default=1.0)
    lift.add_argument("--eps", type=float, default=1e-5)
    _add_common(lift)
    lift.set_defaults(func=_cmd_liftergram)

    synth = commands.add_parser("synth", help="render a synthetic test instrument")
    synth.add_argument("--mode", choices=("consistent", "inconsistent", "detuned"), required=True)
    synth.add_argument("--pitches", default="48:72", help="'lo:hi' inclusive or comma list")
    synth.add_argument("--velocities", default="25,50,75,100,127")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, metavar="DIR")
    synth.add_argument("--harmonics", type=int, default=8)
    synth.add_argument("--decay", type=float, default=0.5)
    synth.add_argument("--duration", type=float, default=1.0)
    synth.add_argument("--rate", type=int, default=44100)
    synth.add_argument("--detune", type=float, default=0.0)
    synth.add_argument("--id", type=int, default=0)
    synth.add_argument("--subtype", choices=("pcm16", "pcm24", "float32"), default="pcm16")
    _add_common(synth)
    synth.set_defaults(func=_cmd_synth)

    return parser


def main(argv=None):
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InstrumentEvalError as exc:
        _emit_error(exc)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        _emit_error(exc)
        return 1
    except ValueError as exc:
        sys.stderr.write(_dump({"schema": SCHEMA, "error": "UsageError", "message": str(exc)}))
        return 2


if __name__ == "__main__":
    sys.exit(main())
