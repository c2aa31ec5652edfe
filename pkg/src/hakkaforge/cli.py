"""Command line interface.

    forge ingest --config forge.toml
    forge run --config forge.toml --stages cleanup,align,segment
    forge g2p --dialect Sixian --lexicon lexicon.tsv < text.txt
    forge stats out/final.jsonl --csv stats.csv
    forge retention before.jsonl after.jsonl

Exit codes: 0 on success, 1 on operational failure, 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .g2p import G2PError, g2p_convert, load_lexicon
from .model import ConfigError, Dialect, ForgeError, PipelineConfig, read_manifest
from .pipeline import (
    STAGES,
    StageOrderError,
    load_forge_config,
    run_pipeline,
)
from .stats import compute_stats, format_retention, render_csv, render_text, retention

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

log = logging.getLogger("forge")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forge", description="Hakka speech corpus pipeline")
    parser.add_argument("--version", action="version", version=f"forge {__version__}")
    parser.add_argument("--log-level", default="INFO", help="logging level (default INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_stage_command(name: str, help_text: str):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="pipeline config TOML")
        cmd.add_argument("--input", help="input manifest (defaults to the newest stage output)")
        return cmd

    add_stage_command("ingest", "crawl configured sources into a scraped manifest")
    add_stage_command("cleanup", "rescore ill-transcribed records against n-best lists")
    add_stage_command("align", "force-align phonemes to audio")
    add_stage_command("segment", "trim and split utterances at silences")
    add_stage_command("concat", "concatenate adjacent segment pairs")

    g2p_cmd = sub.add_parser("g2p", help="phonemize a manifest, or stdin lines with --dialect")
    g2p_cmd.add_argument("--config", help="pipeline config TOML (manifest mode)")
    g2p_cmd.add_argument("--input", help="input manifest (manifest mode)")
    g2p_cmd.add_argument("--dialect", help="dialect name (stdin filter mode)")
    g2p_cmd.add_argument("--lexicon", help="lexicon TSV (stdin filter mode)")
    g2p_cmd.add_argument(
        "--strict",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="fail on characters missing from the lexicon (default on)",
    )

    stats_cmd = sub.add_parser("stats", help="print corpus statistics for a manifest")
    stats_cmd.add_argument("manifest", help="manifest JSONL file")
    stats_cmd.add_argument("--csv", help="also write machine-readable CSV here")

    ret_cmd = sub.add_parser("retention", help="hours retained between two manifests")
    ret_cmd.add_argument("before", help="manifest before processing")
    ret_cmd.add_argument("after", help="manifest after processing")

    run_cmd = sub.add_parser("run", help="run several stages in order")
    run_cmd.add_argument("--config", required=True, help="pipeline config TOML")
    run_cmd.add_argument("--stages", required=True, help=f"comma-separated subset of: {', '.join(STAGES)}")
    run_cmd.add_argument("--input", help="input manifest for the first stage")
    return parser


def _cmd_run_stages(args, stages) -> int:
    cfg = load_forge_config(args.config)
    result = run_pipeline(cfg, stages, input_path=args.input)
    failed = sum(len(r.warnings) for r in result.reports)
    if failed:
        log.warning("%d warning(s); see run_report.json", failed)
    return EXIT_OK


def _cmd_g2p(args) -> int:
    if args.dialect or args.lexicon:
        if not (args.dialect and args.lexicon):
            print("error: stdin mode needs both --dialect and --lexicon", file=sys.stderr)
            return EXIT_USAGE
        try:
            dialect = Dialect.parse(args.dialect)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        lexicon = load_lexicon(args.lexicon)
        config = PipelineConfig()
        for line_no, line in enumerate(sys.stdin, start=1):
            line = line.strip()
            if not line:
                print()
                continue
            try:
                seq = g2p_convert(line, dialect, lexicon, config, strict=args.strict)
            except G2PError as exc:
                print(f"error: stdin:{line_no}: {exc}", file=sys.stderr)
                return EXIT_FAILURE
            print(seq.render())
        return EXIT_OK
    if not args.config:
        print("error: manifest mode needs --config (or pass --dialect/--lexicon)", file=sys.stderr)
        return EXIT_USAGE
    return _cmd_run_stages(args, ["g2p"])


def _cmd_stats(args) -> int:
    manifest = read_manifest(args.manifest)
    table = compute_stats(manifest)
    print(render_text(table), end="")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(render_csv(table))
    return EXIT_OK


def _cmd_retention(args) -> int:
    before = compute_stats(read_manifest(args.before))
    after = compute_stats(read_manifest(args.after))
    print(format_retention(retention(before, after)))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command in ("ingest", "cleanup", "align", "segment", "concat"):
            return _cmd_run_stages(args, [args.command])
        if args.command == "g2p":
            return _cmd_g2p(args)
        if args.command == "stats":
            return _cmd_stats(args)
        if args.command == "retention":
            return _cmd_retention(args)
        if args.command == "run":
            stages = [s.strip() for s in args.stages.split(",") if s.strip()]
            return _cmd_run_stages(args, stages)
        parser.error(f"unknown command {args.command!r}")
    except (ConfigError, StageOrderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
