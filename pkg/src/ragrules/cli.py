"""Command-line entry point.

Subcommands bind config files to the miners, the oracle, and the bench
workloads, and write versioned JSON reports or CSVs. Configs are YAML; any
relative paths inside a config resolve against the config file's directory.
Secrets never appear in configs: remote model blocks name the environment
variable that holds the API key.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Mapping

import yaml

from . import __version__, bench, report
from .lattice import InputSet, Interpretation, mask_from_indices, mask_to_indices
from .miner_dual import mine_dual
from .miner_mono import MiningAborted, mine
from .model import ModelClient, ModelError, QueryContext, model_from_config
from .oracle import brute_force_valid, verify_rule
from .predicate import PredicateError, predicate_from_config


class ConfigError(Exception):
    pass


def parse_mask_spec(value: Any, n: int) -> int:
    """Read a mask from config or flag text.

    Integers are raw masks. Strings are either a based literal (0b0110,
    0x1a), the empty set ("", "none", "[]"), or comma-separated 1-based
    source indices ("2,4"). Lists are 1-based indices.
    """
    if isinstance(value, bool):
        raise ConfigError(f"not a mask: {value!r}")
    if isinstance(value, int):
        if value < 0 or value >> n:
            raise ConfigError(f"mask {value} does not fit width {n}")
        return value
    if isinstance(value, (list, tuple)):
        return mask_from_indices([int(i) for i in value], n)
    if isinstance(value, str):
        text = value.strip().strip("[]")
        if text.lower() in ("", "none"):
            return 0
        if text.lower() == "all":
            return (1 << n) - 1
        if text.startswith(("0b", "0B", "0x", "0X")):
            mask = int(text, 0)
            if mask >> n:
                raise ConfigError(f"mask {value!r} does not fit width {n}")
            return mask
        try:
            indices = [int(part) for part in text.split(",")]
        except ValueError:
            raise ConfigError(f"not a mask: {value!r}") from None
        return mask_from_indices(indices, n)
    raise ConfigError(f"not a mask: {value!r}")


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        config = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError(f"{path} does not contain a mapping")
    config["_dir"] = str(path.parent)
    return config


def _resolve_path(config: Mapping, value: str) -> str:
    base = Path(config.get("_dir", "."))
    return str((base / value) if not Path(value).is_absolute() else Path(value))


def build_input_set(config: Mapping) -> InputSet:
    block = config.get("input")
    if not isinstance(block, Mapping) or "sources" not in block:
        raise ConfigError("config needs an input block with a sources list")
    context = QueryContext(
        question=block.get("question", ""),
        instructions=block.get("instructions") or QueryContext("").instructions,
    )
    return InputSet(block["sources"], context=context, labels=block.get("labels"))


def build_client(config: Mapping, input_set: InputSet) -> ModelClient:
    block = dict(config.get("model") or {})
    if not block:
        raise ConfigError("config needs a model block")
    n = input_set.width
    if block.get("kind") == "scripted":
        outputs = block.get("outputs")
        if not isinstance(outputs, Mapping):
            raise ConfigError("scripted model needs an outputs table")
        block["outputs"] = {parse_mask_spec(k, n): v for k, v in outputs.items()}
    if block.get("kind") == "validity_assignment" and "satisfied" in block:
        block["satisfied"] = [parse_mask_spec(m, n) for m in block["satisfied"]]
    if block.get("kind") == "replay":
        block["path"] = _resolve_path(config, block["path"])
    try:
        return model_from_config(block, input_set.sources)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad model block: {exc}") from exc


def build_predicate(config: Mapping, key: str = "predicate"):
    block = config.get(key)
    if not isinstance(block, Mapping):
        raise ConfigError(f"config needs a {key} block")
    judge = None
    if block.get("kind") == "judge":
        judge_block = config.get("judge_model")
        if not isinstance(judge_block, Mapping):
            raise ConfigError("judge predicates need a judge_model block")
        judge = model_from_config(dict(judge_block))
    try:
        return predicate_from_config(block, judge)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad {key} block: {exc}") from exc


def _interpretation(value: str) -> Interpretation:
    try:
        return Interpretation(value)
    except ValueError:
        raise ConfigError(f"interpretation must be retention or omission, got {value!r}") from None


def _digest(config: Mapping) -> str:
    public = {k: v for k, v in config.items() if not k.startswith("_")}
    return report.config_digest(public)


def _emit(args, built: dict, config: Mapping, default_name: str) -> Path:
    out = args.output or config.get("output") or default_name
    return report.write_report(built, out)


def _abort(exc: MiningAborted) -> int:
    print(
        f"error: mining aborted at level {exc.level}, node mask={exc.mask:#b} "
        f"(sources {mask_to_indices(exc.mask)}): {exc.cause}",
        file=sys.stderr,
    )
    return 1


def cmd_mine_mono(args) -> int:
    config = load_config(args.config)
    input_set = build_input_set(config)
    client = build_client(config, input_set)
    predicate = build_predicate(config)
    interpretation = _interpretation(args.interpretation
                                     or config.get("interpretation", "retention"))
    workers = args.parallelism or int(config.get("parallelism", 1))
    try:
        result = mine(input_set, predicate, client, interpretation, max_workers=workers)
    except MiningAborted as exc:
        return _abort(exc)
    built = report.build_mono_report(input_set, interpretation, result,
                                     predicate.description, _digest(config))
    path = _emit(args, built, config, "mono_report.json")
    minimal = [mask_to_indices(m) for m in result.minimal]
    print(f"{len(result.valid)} valid rule(s), minimal frontier {minimal}, "
          f"{result.telemetry.model_calls} model call(s)")
    print(f"report written to {path}")
    return 0


def cmd_mine_dual(args) -> int:
    config = load_config(args.config)
    input_set = build_input_set(config)
    client = build_client(config, input_set)
    retention = build_predicate(config, "retention_predicate")
    omission = build_predicate(config, "omission_predicate")
    cache = config.get("cache", True) if args.cache is None else args.cache
    workers = args.parallelism or int(config.get("parallelism", 1))
    try:
        result = mine_dual(input_set, retention, omission, client,
                           cache_enabled=bool(cache), max_workers=workers)
    except MiningAborted as exc:
        return _abort(exc)
    built = report.build_dual_report(input_set, result, retention.description,
                                     omission.description, _digest(config))
    path = _emit(args, built, config, "dual_report.json")
    print(f"retention: {len(result.valid_ret)} rule(s), "
          f"omission: {len(result.valid_omi)} rule(s), "
          f"{result.telemetry.model_calls} model call(s), "
          f"{result.telemetry.cache_hits} cache hit(s)")
    print(f"report written to {path}")
    return 0


def cmd_verify(args) -> int:
    config = load_config(args.config)
    input_set = build_input_set(config)
    client = build_client(config, input_set)
    predicate = build_predicate(config)
    interpretation = _interpretation(args.interpretation
                                     or config.get("interpretation", "retention"))
    mask = parse_mask_spec(args.mask, input_set.width)
    valid = verify_rule(mask, interpretation, input_set, predicate, client)
    print("valid" if valid else "invalid")
    if args.output:
        built = report.build_verify_report(input_set, interpretation, mask, valid,
                                           predicate.description, _digest(config))
        report.write_report(built, args.output)
    return 0


def cmd_oracle(args) -> int:
    config = load_config(args.config)
    input_set = build_input_set(config)
    client = build_client(config, input_set)
    predicate = build_predicate(config)
    interpretation = _interpretation(args.interpretation
                                     or config.get("interpretation", "retention"))
    result = brute_force_valid(interpretation, input_set, predicate, client)
    built = report.build_oracle_report(input_set, interpretation, result,
                                       predicate.description, _digest(config))
    path = _emit(args, built, config, "oracle_report.json")
    print(f"{len(result.valid)} valid rule(s) over {result.evaluations} evaluations")
    print(f"report written to {path}")
    return 0


def cmd_sweep(args) -> int:
    rows = bench.synth_sweep(args.n)
    path = bench.write_sweep_csv(rows, args.output)
    print(f"{len(rows)} row(s) written to {path}")
    return 0


def cmd_hotpot_curves(args) -> int:
    config = load_config(args.config)
    dataset = _resolve_path(config, config["dataset"])
    examples = bench.load_hotpot(dataset)
    wanted = int(config.get("supporting_facts", 3))
    examples = bench.filter_by_supporting_count(examples, wanted)
    if not examples:
        raise ConfigError(f"no examples with exactly {wanted} supporting facts")
    client = model_from_config({
        "kind": "replay",
        "path": _resolve_path(config, config["transcripts"]),
        "model": config["model_name"],
        "temperature": config.get("temperature", 0.0),
        "seed": config.get("seed"),
    })
    k_max = int(config.get("k_max", 6))
    result = bench.run_curves(examples, range(0, k_max + 1), client)
    outdir = args.output_dir or _resolve_path(config, config.get("output_dir", "curves_out"))
    paths = bench.write_curves_csvs(result, outdir)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


def cmd_explain(args) -> int:
    built = report.load_report(args.report)
    print(report.explain_report(built))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ragrules",
        description="Mine retention/omission rules that explain which sources "
                    "drive a model output condition.",
    )
    parser.add_argument("--version", action="version", version=f"ragrules {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    mask_help = ("mask literal like 0b0110, 1-based source indices like 2,4, "
                 "or none for the empty set")

    p = sub.add_parser("mine-mono", help="mine rules of one interpretation")
    p.add_argument("--config", required=True)
    p.add_argument("--interpretation", choices=["retention", "omission"])
    p.add_argument("--parallelism", type=int)
    p.add_argument("--output")
    p.set_defaults(fn=cmd_mine_mono)

    p = sub.add_parser("mine-dual", help="mine both rule types in one pass")
    p.add_argument("--config", required=True)
    p.add_argument("--parallelism", type=int)
    p.add_argument("--output")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--cache", dest="cache", action="store_true", default=None)
    group.add_argument("--no-cache", dest="cache", action="store_false")
    p.set_defaults(fn=cmd_mine_dual)

    p = sub.add_parser("verify", help="check one rule against its definition")
    p.add_argument("--config", required=True)
    p.add_argument("--mask", required=True, help=mask_help)
    p.add_argument("--interpretation", choices=["retention", "omission"])
    p.add_argument("--output")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("oracle", help="brute-force the full valid set")
    p.add_argument("--config", required=True)
    p.add_argument("--interpretation", choices=["retention", "omission"])
    p.add_argument("--output")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("sweep", help="exhaustive synthetic assignment sweep")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--output", default="sweep.csv")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("hotpot-curves", help="replay-driven pruning curves")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.set_defaults(fn=cmd_hotpot_curves)

    p = sub.add_parser("explain", help="render a report as if-then sentences")
    p.add_argument("--report", required=True)
    p.set_defaults(fn=cmd_explain)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ModelError, PredicateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
