"""The `engage` command: one binary dispatching every pipeline stage.

Exit codes: 0 success, 1 validation problem, 2 I/O problem. Diagnostics
go to stderr; declared output files are the only machine-readable output.
Flags win over config-file values, which win over built-in defaults; the
root seed may also arrive through ENGAGE_SEED (a --seed flag beats it).
"""

import argparse
import os
import sys

from . import pipeline
from .config import load_config
from .errors import DataIOError, NgageError, ValidationError
from .features import TARGETS
from .model import GbmParams
from .synth import generate_cohort


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="engage",
        description="wearable + environment recordings -> engagement scores")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, *flags):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None,
                       help="JSON config file ('default' = built-ins)")
        p.add_argument("--seed", type=int, default=None)
        for flag in flags:
            if flag == "--data":
                p.add_argument("--data", default=None,
                               help="cohort directory (holds e4/, schedule.csv, ...)")
            elif flag == "--schedule":
                p.add_argument("--schedule", default=None)
            elif flag == "--surveys":
                p.add_argument("--surveys", default=None)
            elif flag == "--env":
                p.add_argument("--env", default=None)
            elif flag == "--boundaries":
                p.add_argument("--boundaries", default=None,
                               help="boundaries.csv from `engage segment`")
            elif flag == "--out":
                p.add_argument("--out", default=None)
            elif flag == "--session":
                p.add_argument("--session", default=None,
                               help="participant:class_id")
            elif flag == "--features":
                p.add_argument("--features", default=None)
            elif flag == "--target":
                p.add_argument("--target", default=None)
            elif flag == "--regimes":
                p.add_argument("--regimes", default=None,
                               help="JSON list of sensor/subject/target regimes")
            elif flag == "--report":
                p.add_argument("--report", default=None)
            elif flag == "--out-dir":
                p.add_argument("--out-dir", dest="out_dir", default=None)
        return p

    add("synth", "generate a synthetic cohort", "--out")
    add("segment", "estimate actual class boundaries",
        "--data", "--schedule", "--out")
    add("clean", "per-session quality decisions",
        "--data", "--schedule", "--boundaries", "--out")
    add("eda", "decompose one session window",
        "--data", "--schedule", "--session", "--boundaries", "--out")
    add("hrv", "pulse-variability features for one session",
        "--data", "--schedule", "--session", "--boundaries", "--out")
    add("features", "extract the per-session feature table",
        "--data", "--schedule", "--surveys", "--env", "--boundaries", "--out")
    add("train", "fit a boosted model on a feature table",
        "--features", "--target", "--out")
    add("eval", "nested cross-validated evaluation report",
        "--features", "--target", "--regimes", "--out")
    add("report", "re-emit CSV companions from a report.json",
        "--report", "--out-dir")
    return parser


def _load_cfg(args):
    path = args.config
    if path in (None, "default"):
        return load_config(None)
    return load_config(path)


def _resolve_seed(args, config):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("ENGAGE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"ENGAGE_SEED must be an integer, got {env!r}")
    return config["seed"]


def _path(args, config, name, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    value = config["paths"].get(name)
    return value if value is not None else default


def _data_layout(args, config):
    """Resolve the cohort paths, defaulting into the --data directory."""
    data = _path(args, config, "data")
    schedule = _path(args, config, "schedule",
                     os.path.join(data, "schedule.csv"))
    surveys = _path(args, config, "surveys")
    if surveys is None:
        candidate = os.path.join(data, "surveys.csv")
        surveys = candidate if os.path.exists(candidate) else None
    env = _path(args, config, "env")
    if env is None:
        candidate = os.path.join(data, "env.csv")
        env = candidate if os.path.exists(candidate) else None
    boundaries = _path(args, config, "boundaries")
    return data, schedule, surveys, env, boundaries


def _targets(args, config, allow_all):
    target = args.target if args.target is not None else config["run"]["target"]
    valid = TARGETS + (("all",) if allow_all else ())
    if target not in valid:
        raise ValidationError(
            f"invalid target {target!r}; valid targets are "
            "{behavioural, emotional, cognitive, overall, all}"
            if allow_all else
            f"invalid target {target!r}; valid targets are "
            "{behavioural, emotional, cognitive, overall}")
    return list(TARGETS) if target == "all" else [target]


def _note(message):
    print(message, file=sys.stderr)


def run(argv=None):
    args = _build_parser().parse_args(argv)
    config = _load_cfg(args)
    seed = _resolve_seed(args, config)

    if args.command == "synth":
        config["seed"] = seed
        out = _path(args, config, "out", config["paths"]["data"])
        summary = generate_cohort(config, out)
        _note(f"synth: {summary['n_classes']} classes, "
              f"{summary['n_surveys']} surveys -> {summary['out_dir']}")
        return 0

    if args.command == "segment":
        data, schedule, _surveys, _env, _b = _data_layout(args, config)
        out = _path(args, config, "out", "boundaries.csv")
        summary = pipeline.stage_segment(data, schedule, None, config, out)
        _note(f"segment: {summary['n_classes']} classes -> {out}")
        return 0

    if args.command == "clean":
        data, schedule, _surveys, _env, boundaries = _data_layout(args, config)
        out = _path(args, config, "out", "quality.csv")
        summary = pipeline.stage_clean(data, schedule, None, config, out,
                                       boundaries_path=boundaries)
        _note(f"clean: {summary['n_accepted']}/{summary['n_sessions']} "
              f"sessions accepted -> {out}")
        return 0

    if args.command in ("eda", "hrv"):
        data, schedule, _surveys, _env, boundaries = _data_layout(args, config)
        session = (args.session if args.session is not None
                   else config["run"]["session"])
        if not session:
            raise ValidationError("--session is required (participant:class_id)")
        if args.command == "eda":
            out = _path(args, config, "out", "decomp.csv")
            summary = pipeline.stage_eda_session(
                data, schedule, None, session, config, out,
                boundaries_path=boundaries)
            _note(f"eda: {summary['n_samples']} samples -> {out}")
        else:
            out = _path(args, config, "out", "hrv.csv")
            pipeline.stage_hrv_session(data, schedule, None, session, config,
                                       out, boundaries_path=boundaries)
            _note(f"hrv: one row -> {out}")
        return 0

    if args.command == "features":
        data, schedule, surveys, env, boundaries = _data_layout(args, config)
        if surveys is None:
            raise DataIOError(
                f"no survey file: pass --surveys or place surveys.csv in {data}")
        out = _path(args, config, "out", config["paths"]["features"])
        summary = pipeline.stage_features(data, schedule, surveys, env, config,
                                          out, boundaries_path=boundaries)
        _note(f"features: {summary['n_rows']} labelled rows "
              f"({summary['n_accepted']}/{summary['n_sessions']} sessions "
              f"accepted) -> {out}")
        return 0

    if args.command == "train":
        features = _path(args, config, "features", config["paths"]["features"])
        target = _targets(args, config, allow_all=False)[0]
        out = _path(args, config, "out", config["paths"]["model"])
        params = GbmParams(min_samples_leaf=config["model"]["min_samples_leaf"],
                           seed=seed)
        summary = pipeline.stage_train(features, target, config, out,
                                       params=params)
        _note(f"train: {summary['n_trees']} trees on {summary['n_rows']} rows "
              f"-> {out}")
        return 0

    if args.command == "eval":
        features = _path(args, config, "features", config["paths"]["features"])
        targets = _targets(args, config, allow_all=True)
        regimes = _path(args, config, "regimes")
        out = _path(args, config, "out", config["paths"]["report"])
        pipeline.stage_eval(features, targets, config, seed, out,
                            regimes_path=regimes)
        _note(f"eval: targets {','.join(targets)} -> {out}")
        return 0

    if args.command == "report":
        report = _path(args, config, "report", config["paths"]["report"])
        out_dir = _path(args, config, "out_dir", config["paths"]["out_dir"])
        pipeline.reemit_report(report, out_dir)
        _note(f"report: companions rewritten under {out_dir}")
        return 0

    raise ValidationError(f"unknown command {args.command!r}")


def main(argv=None):
    try:
        return run(argv)
    except ValidationError as exc:
        _note(f"error: {exc}")
        return 1
    except DataIOError as exc:
        _note(f"error: {exc}")
        return 2
    except OSError as exc:
        _note(f"error: {exc}")
        return 2
    except NgageError as exc:
        _note(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
