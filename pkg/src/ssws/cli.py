"""Command-line entry point: train, synthesize, design tests, serve, analyze.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  Every source of
randomness is pinned by an explicit --seed so runs are reproducible from
their flags alone.
"""

import argparse
import os
import sys

import numpy as np

from ssws.audio_codec import (
    AudioBuffer,
    CodecError,
    mulaw_decode,
    mulaw_encode,
    read_wav,
    write_wav,
)
from ssws.conditioning import (
    FeatureError,
    generate_synthetic_features,
    read_feature_file,
    read_feature_text,
    write_feature_file,
)
from ssws.mushra.design import (
    DesignError,
    build_assignment,
    load_plan,
    read_assignment,
    validate_assignment,
    write_assignment,
)
from ssws.mushra.errors import (
    FlagError,
    aggregate_by_domain,
    aggregate_by_system,
    format_domain_table,
    format_system_table,
    read_flags_csv,
)
from ssws.mushra.stats import (
    StatsError,
    format_report,
    read_ratings_csv,
    summarize,
    write_pairs_csv,
)
from ssws.neural_core import (
    AutodiffError,
    CheckpointError,
    LearningRateSchedule,
    NonFiniteGradientError,
    load_checkpoint,
    save_checkpoint,
)
from ssws.sampler import SamplerConfig, SamplerError, synthesize
from ssws.service import EvalStore, ServiceError, create_app
from ssws.trainer import TrainError, TrainRunConfig, load_dataset, train
from ssws.wavenet import ModelConfigError, StackError, load_stack_config

_FAILURES = (CodecError, FeatureError, ModelConfigError, StackError,
             TrainError, SamplerError, DesignError, StatsError, FlagError,
             ServiceError, AutodiffError, CheckpointError,
             NonFiniteGradientError, OSError, ValueError)


def _read_kv_config(path, allowed):
    """key=value file with # comments; unknown keys rejected."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, val = (p.strip() for p in line.split("=", 1))
            if key not in allowed:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            if key in out:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = val
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_codec(args):
    if args.action == "encode":
        audio = read_wav(args.infile)
        bins = mulaw_encode(audio.samples, n_bins=args.bins)
        np.savetxt(args.outfile, bins, fmt="%d",
                   header=f"mu-law bins n={args.bins} rate={audio.sample_rate}")
    else:
        bins = np.loadtxt(args.infile, dtype=np.int64)
        samples = mulaw_decode(bins, n_bins=args.bins)
        write_wav(args.outfile, AudioBuffer(args.rate, samples))
    return 0


def cmd_features(args):
    if args.text:
        feats = read_feature_text(args.text)
    else:
        audio = read_wav(args.audio)
        feats = generate_synthetic_features(audio, seed=args.seed,
                                            hop_size=args.hop)
    write_feature_file(args.out, feats)
    print(f"{feats.n_frames} frames x {feats.frames.shape[1]} dims, "
          f"hop {feats.hop_size}")
    return 0


def _train_overrides(args):
    keys = ("epochs", "seed", "batch_size", "rate", "anneal", "stop_below",
            "checkpoint_dir", "trace")
    values = {}
    if args.train_config:
        raw = _read_kv_config(args.train_config, set(keys))
        casts = {"epochs": int, "seed": int, "batch_size": int, "rate": float,
                 "anneal": float, "stop_below": float,
                 "checkpoint_dir": str, "trace": str}
        values = {k: casts[k](v) for k, v in raw.items()}
    for k in keys:         # explicit flags win over the config file
        flag = getattr(args, k)
        if flag is not None:
            values[k] = flag
    return values


def cmd_train(args):
    config = load_stack_config(args.config)
    dataset = load_dataset(args.manifest, n_bins=config.quantization_bins)
    v = _train_overrides(args)
    schedule = LearningRateSchedule(
        initial_rate=v.get("rate", 5e-4),
        anneal_factor=v.get("anneal", 0.836))
    run = TrainRunConfig(epochs=v.get("epochs", 1), seed=v.get("seed", 0),
                         batch_size=v.get("batch_size", 1), schedule=schedule,
                         checkpoint_dir=v.get("checkpoint_dir"),
                         trace_path=v.get("trace"),
                         stop_below=v.get("stop_below"))
    params = adam = None
    if args.resume:
        params, adam = load_checkpoint(args.resume)
    result = train(dataset, config, run, params=params, adam=adam)
    if args.out:
        save_checkpoint(args.out, result.params, result.adam)
    epoch, loss, rate = result.trace[-1]
    print(f"epoch {epoch}: loss {loss:.4f} (lr {rate:.3g})")
    return 0


def cmd_synth(args):
    config = load_stack_config(args.config)
    params, _ = load_checkpoint(args.checkpoint)
    feats = read_feature_file(args.features)
    sampler = SamplerConfig(seed=args.seed, temperature=args.temperature,
                            greedy=args.greedy, trace_path=args.trace)
    audio = synthesize(feats, params, config, sampler)
    write_wav(args.out, audio)
    print(f"{len(audio)} samples at {audio.sample_rate} Hz -> {args.out}")
    return 0


def _plan_from_args(args):
    return load_plan(args.plan, n_listeners=args.listeners,
                     screens_per_listener=args.screens,
                     ratings_per_utterance=args.ratings, seed=args.seed,
                     audio_root=getattr(args, "audio_root", None))


def cmd_design(args):
    plan, _ = _plan_from_args(args)
    assignment = build_assignment(plan)
    problems = validate_assignment(assignment, plan)
    if problems:
        for p in problems:
            print(f"violation: {p}", file=sys.stderr)
        return 1
    write_assignment(args.out, assignment)
    n_screens = sum(len(s) for s in assignment.screens.values())
    print(f"{len(assignment.screens)} listeners, {n_screens} screens -> {args.out}")
    return 0


def cmd_validate(args):
    plan, _ = _plan_from_args(args)
    assignment = read_assignment(args.assignment)
    problems = validate_assignment(assignment, plan)
    if problems:
        for p in problems:
            print(f"violation: {p}")
        print(f"{len(problems)} violation(s)")
        return 1
    print("assignment valid")
    return 0


def cmd_serve(args):
    import uvicorn

    allowed = {"plan", "assignment", "log", "port", "host", "audio_root",
               "listeners", "screens", "ratings"}
    cfg = _read_kv_config(args.config, allowed) if args.config else {}
    for key in ("plan", "assignment", "log", "audio_root", "host"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    for key in ("port", "listeners", "screens", "ratings"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    for key in ("plan", "assignment", "listeners", "screens", "ratings"):
        if key not in cfg:
            raise ValueError(f"serve needs {key} (flag or config file)")

    plan, paths = load_plan(cfg["plan"], n_listeners=int(cfg["listeners"]),
                            screens_per_listener=int(cfg["screens"]),
                            ratings_per_utterance=int(cfg["ratings"]),
                            audio_root=cfg.get("audio_root"))
    assignment = read_assignment(cfg["assignment"])
    problems = validate_assignment(assignment, plan)
    if problems:
        raise ValueError(f"assignment fails validation: {problems[0]} "
                         f"(+{len(problems) - 1} more)")
    store = EvalStore(plan, assignment, paths, log_path=cfg.get("log"))
    app = create_app(store)
    uvicorn.run(app, host=cfg.get("host", "127.0.0.1"),
                port=int(cfg.get("port", 8000)), log_level="warning")
    return 0


def cmd_analyze(args):
    ratings = read_ratings_csv(args.ratings)
    reports = summarize(ratings, grouping="overall", alpha=args.alpha)
    if args.by_domain:
        reports += summarize(ratings, grouping="per-domain", alpha=args.alpha)
    text = "\n".join(format_report(r) for r in reports)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")
    if args.pairs_csv:
        write_pairs_csv(args.pairs_csv, reports)
    return 0


def cmd_errors_report(args):
    flags = read_flags_csv(args.flags)
    print(format_system_table(aggregate_by_system(flags)), end="")
    if args.category:
        if not (args.plan and args.system):
            raise ValueError("--category needs --plan and --system for the "
                             "per-domain breakdown")
        plan, _ = load_plan(args.plan, n_listeners=1, screens_per_listener=1,
                            ratings_per_utterance=1)
        domains = {u: d for u, d in plan.utterances}
        table = aggregate_by_domain(flags, domains, args.category, args.system)
        print()
        print(format_domain_table(table), end="")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ssws",
        description="Speech waveform synthesis engine and MUSHRA workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("codec", help="mu-law encode/decode audio")
    p.add_argument("action", choices=["encode", "decode"])
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--bins", type=int, default=1024)
    p.add_argument("--rate", type=int, default=24000,
                   help="sample rate for decode output")
    p.set_defaults(func=cmd_codec)

    p = sub.add_parser("features", help="build conditioning features")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--audio", help="derive synthetic features from a wav")
    src.add_argument("--text", help="import a text feature dump")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hop", type=int, default=None)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train on a manifest")
    p.add_argument("--config", required=True, help="model config file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--train-config", help="key=value training defaults")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--rate", type=float, help="initial learning rate")
    p.add_argument("--anneal", type=float, help="per-epoch anneal factor")
    p.add_argument("--stop-below", dest="stop_below", type=float)
    p.add_argument("--checkpoint-dir", dest="checkpoint_dir")
    p.add_argument("--trace", help="loss trace CSV path")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out", help="final checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="autoregressive synthesis")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--greedy", action="store_true")
    p.add_argument("--trace", help="per-sample bin trace CSV")
    p.set_defaults(func=cmd_synth)

    def plan_flags(p):
        p.add_argument("--plan", required=True)
        p.add_argument("--listeners", type=int, required=True)
        p.add_argument("--screens", type=int, required=True)
        p.add_argument("--ratings", type=int, required=True)

    p = sub.add_parser("design", help="build a balanced assignment")
    plan_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("validate", help="check an assignment against its plan")
    plan_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--assignment", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="run the listening-test service")
    p.add_argument("--config", help="key=value server config")
    p.add_argument("--plan")
    p.add_argument("--listeners", type=int)
    p.add_argument("--screens", type=int)
    p.add_argument("--ratings", type=int)
    p.add_argument("--assignment")
    p.add_argument("--log", help="append-only JSONL record log")
    p.add_argument("--audio-root", dest="audio_root")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("analyze", help="significance analysis of ratings")
    p.add_argument("--ratings", required=True)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--by-domain", dest="by_domain", action="store_true")
    p.add_argument("--pairs-csv", dest="pairs_csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("errors-report", help="aggregate error flags")
    p.add_argument("--flags", required=True)
    p.add_argument("--category", help="per-domain breakdown for one category")
    p.add_argument("--system", help="system for the per-domain breakdown")
    p.add_argument("--plan", help="plan manifest giving utterance domains")
    p.set_defaults(func=cmd_errors_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _FAILURES as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
