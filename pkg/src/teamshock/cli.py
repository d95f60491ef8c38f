"""Command-line interface.

One subcommand per stage plus ``run`` (all stages with a manifest) and
``synth`` (seeded synthetic corpus generation).  Stage subcommands
recompute their prerequisites deterministically from the inputs, so each
can be invoked standalone; ``run`` is the cheapest way to produce
everything at once.

Exit codes: 0 success, 1 configuration/validation error, 2 stage failure.
"""

import argparse
import json
import sys

from .pipeline import (ConfigError, PipelineConfig, StageError,
                       run_pipeline)
from .synth import ShockSpec, SyntheticSpec, generate_synthetic

#: CLI flag -> PipelineConfig field for config-file overrides.
_CONFIG_FLAGS = (
    "events_path", "profiles_path", "languages_path", "out_dir",
    "reference_year", "target_year", "alpha", "bootstrap_iterations",
    "min_active_members", "test_fraction", "cluster_threshold", "seed",
)


def _add_config_args(parser):
    parser.add_argument("--config", help="YAML config file; flags override it")
    parser.add_argument("--events", dest="events_path")
    parser.add_argument("--profiles", dest="profiles_path")
    parser.add_argument("--languages", dest="languages_path")
    parser.add_argument("--out", dest="out_dir")
    parser.add_argument("--reference-year", dest="reference_year", type=int)
    parser.add_argument("--target-year", dest="target_year", type=int)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--iterations", dest="bootstrap_iterations", type=int)
    parser.add_argument("--min-members", dest="min_active_members", type=int)
    parser.add_argument("--test-fraction", dest="test_fraction", type=float)
    parser.add_argument("--cluster-threshold", dest="cluster_threshold",
                        type=float)
    parser.add_argument("--seed", type=int)


def _build_config(args) -> PipelineConfig:
    overrides = {name: getattr(args, name, None) for name in _CONFIG_FLAGS}
    if args.config:
        return PipelineConfig.from_file(args.config, overrides)
    provided = {k: v for k, v in overrides.items() if v is not None}
    for required in ("events_path", "profiles_path", "languages_path",
                     "out_dir"):
        if required not in provided:
            raise ConfigError(
                f"missing --{required.replace('_path', '').replace('_', '-')} "
                "(or provide --config)")
    return PipelineConfig(**provided)


#: Subcommand -> last pipeline stage it needs.  ``report`` regenerates the
#: rendered outputs, which requires everything upstream.
_STAGE_OF = {
    "ingest": "ingest",
    "aggregate": "aggregate_forecast",
    "forecast": "aggregate_forecast",
    "select": "select",
    "features": "features",
    "train": "train",
    "predict": "predict",
    "effects": "effects",
    "regress": "regress",
    "report": "regress",
}


def _cmd_stage(args) -> int:
    config = _build_config(args)
    last = _STAGE_OF[args.command]
    run_pipeline(config, until=last)
    print(f"completed through stage {last!r}; outputs in {config.out_dir}")
    return 0


def _cmd_run(args) -> int:
    config = _build_config(args)
    manifest = run_pipeline(config)
    n_outputs = sum(len(s.get("outputs", {}))
                    for s in manifest["stages"].values())
    print(f"pipeline complete: {n_outputs} outputs in {config.out_dir}")
    for warning in manifest["warnings"]:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def _cmd_synth(args) -> int:
    shock = ShockSpec(productivity_ate=args.productivity_ate,
                      team_size_ate=args.team_size_ate)
    spec = SyntheticSpec(n_repos=args.n_repos, start_year=args.start_year,
                         reference_year=args.reference_year,
                         target_year=args.target_year, shock=shock)
    paths = generate_synthetic(spec, seed=args.seed or 0, out_dir=args.out)
    print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2,
                     sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teamshock",
        description="Estimate causal effects of an external shock on "
                    "teams observed through collaboration event logs.")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--n-repos", type=int, default=200)
    synth.add_argument("--productivity-ate", type=float, default=0.0)
    synth.add_argument("--team-size-ate", type=float, default=0.0)
    synth.add_argument("--start-year", type=int, default=2017)
    synth.add_argument("--reference-year", type=int, default=2018)
    synth.add_argument("--target-year", type=int, default=2019)
    synth.set_defaults(func=_cmd_synth)

    for name, help_text in (
        ("ingest", "parse and validate the event log"),
        ("aggregate", "aggregate monthly platform metrics"),
        ("forecast", "forecast counterfactual platform metrics"),
        ("select", "select stable teams"),
        ("features", "compute the team-property feature registry"),
        ("train", "train counterfactual outcome predictors"),
        ("predict", "predict counterfactual outcomes for target teams"),
        ("effects", "compute per-team effects and error bounds"),
        ("regress", "bootstrapped regressions of effects on features"),
        ("report", "render tables and plots"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_config_args(p)
        p.set_defaults(func=_cmd_stage)

    run = sub.add_parser("run", help="run all stages and write the manifest")
    _add_config_args(run)
    run.set_defaults(func=_cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
