import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from typing import TextIO

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table as RichTable

from dataset import (DatasetError, FileUnreadable, HeaderMismatch, IngestStats, NetworkFailure, NonCsvPayload,
                     RecordFilter, feed_endpoint, fetch_feed, filter_records, load_csv)
from detectors import classify
from lexicon import EmptyCorpus, WordListError, build_lexicon
from pipeline import Analyzer, run_analysis
from report import (FORMATS, PLACES, SCHEMA_VERSION, EmptyAnalysis, Rounding, Table, TYPE_NAMES, finalize,
                    format_fixed, render, render_table)
from settings import COMMANDS, FEATURES, ConfigError, resolve
from url_model import UrlParseError, parse_url

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_NOINPUT = 66
EXIT_UNAVAILABLE = 69

TREND_TABLES = {"https": "T6", "idn": "T7"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def configure_logging(verbosity: int, stream: TextIO | None = None):
    """One rich handler on stderr; -q/-v/-vv move the level"""
    if verbosity < 0:
        level = logging.ERROR
    elif verbosity == 0:
        level = logging.WARNING
    elif verbosity == 1:
        level = logging.INFO
    else:
        level = logging.DEBUG
    console = Console(file=stream) if stream is not None else Console(stderr=True)
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    root.addHandler(RichHandler(console=console, show_path=False, markup=False))
    root.setLevel(level)


def _common_options() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    group = common.add_argument_group("analysis options")
    group.add_argument("--format", choices=FORMATS, default=None)
    group.add_argument("--type3-threshold", type=int, default=None, metavar="N")
    group.add_argument("--edit-distance", type=int, default=None, metavar="N")
    group.add_argument("--brands", default=None, metavar="FILE")
    group.add_argument("--suffixes", default=None, metavar="FILE")
    group.add_argument("--wordlist", action="append", default=None, metavar="FILE|KEY")
    group.add_argument("--top", type=int, default=None, metavar="N")
    group.add_argument("--min-len", type=int, default=None, metavar="N")
    group.add_argument("--type2-mode", choices=("metadata", "heuristic", "both"), default=None)
    group.add_argument("--dedupe-url", action="store_true", default=None)
    group.add_argument("--jobs", type=int, default=None, metavar="N")
    group.add_argument("--no-meta", action="store_true", default=None)
    group.add_argument("--rounding", choices=[r.value for r in Rounding], default=None)
    group.add_argument("--config", default=None, metavar="FILE", help="key = value overrides")

    records = common.add_argument_group("record filters")
    records.add_argument("--verified-only", action="store_true")
    records.add_argument("--online-only", action="store_true")
    records.add_argument("--years", default=None, metavar="A-B")
    records.add_argument("--with-target", action="store_true")

    noise = common.add_argument_group("output")
    noise.add_argument("-v", "--verbose", action="count", default=0)
    noise.add_argument("-q", "--quiet", action="store_true")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="phishcensus", description="Classify and census phishing URL obfuscation techniques")
    commands = parser.add_subparsers(dest="command", metavar="command")
    common = _common_options()

    p = commands.add_parser("classify", parents=[common], help="classify one URL")
    p.add_argument("url")
    p.add_argument("--target", default=None, help="spoofed organisation (enables Type II metadata mode)")

    for name, help_text in [("analyze", "full report over a PhishTank CSV"),
                            ("lexicon", "ranked word tokens of a PhishTank CSV")]:
        p = commands.add_parser(name, parents=[common], help=help_text)
        p.add_argument("csv")

    p = commands.add_parser("trend", parents=[common], help="per-year https or IDN usage")
    p.add_argument("csv")
    p.add_argument("--feature", default=None, help=" | ".join(FEATURES))

    p = commands.add_parser("fetch", parents=[common], help="download a PhishTank feed")
    p.add_argument("endpoint", nargs="?", default=None)
    p.add_argument("-o", "--output", required=True, metavar="FILE")
    p.add_argument("--timeout", type=float, default=None, metavar="SECONDS")
    p.add_argument("--feed-url", default=None, help=argparse.SUPPRESS)
    return parser


def parse_years(text: str | None) -> tuple[int | None, int | None]:
    if not text:
        return None, None
    first, sep, last = text.partition("-")
    try:
        year_from = int(first)
        year_to = int(last) if sep else year_from
    except ValueError:
        raise ConfigError(f"--years expects YEAR or A-B, got {text!r}")
    if year_from > year_to:
        raise ConfigError(f"--years range is reversed: {text!r}")
    return year_from, year_to


def _config_from_args(args: argparse.Namespace):
    year_from, year_to = parse_years(args.years)
    record_filter = RecordFilter(
        verified=True if args.verified_only else None,
        online=True if args.online_only else None,
        year_from=year_from,
        year_to=year_to,
        has_target=True if args.with_target else None,
    )
    flags = dict(vars(args))
    target = {"classify": "url", "fetch": "endpoint"}.get(args.command, "csv")
    return resolve(
        args.command,
        flags,
        config_path=args.config,
        target=getattr(args, target),
        verbosity=-1 if args.quiet else args.verbose,
        feature=getattr(args, "feature", None),
        output=getattr(args, "output", None),
        target_hint=getattr(args, "target", None),
        record_filter=record_filter,
    )


def _build_analyzer(cfg) -> Analyzer:
    try:
        return Analyzer(cfg.analysis_settings())
    except (ValueError, WordListError, OSError) as e:
        raise ConfigError(str(e)) from e


def _print_ingest(stats: IngestStats, console: Console):
    table = RichTable(title="Ingest", show_header=True, header_style="bold")
    table.add_column("metric", style="cyan")
    table.add_column("value", justify="right")
    table.add_row("rows read", str(stats.rows_read))
    table.add_row("records ok", str(stats.records_ok))
    table.add_row("rows skipped", str(stats.rows_skipped))
    for kind, count in sorted(stats.parse_failures_by_kind.items()):
        table.add_row(f"  {kind}", str(count))
    if stats.replacement_chars:
        table.add_row("replacement characters", str(stats.replacement_chars))
    console.print(table)


def _open_records(cfg):
    records, stats = load_csv(cfg.target, dedupe_url=cfg.dedupe_url)
    if not cfg.record_filter.is_empty:
        records = filter_records(records, cfg.record_filter)
    return records, stats


def cmd_classify(cfg, out: TextIO, err: TextIO) -> int:
    try:
        parsed = parse_url(cfg.target)
    except UrlParseError as e:
        err.write(json.dumps({"error": e.kind, "offset": e.offset, "message": str(e)}) + "\n")
        return EXIT_PARSE
    analyzer = _build_analyzer(cfg)
    result = classify(parsed, analyzer.config, cfg.target_hint)
    if cfg.format == "json":
        out.write(json.dumps(result.to_dict(), indent=2, ensure_ascii=False) + "\n")
        return EXIT_OK
    table = Table("classify", result.to_dict()["url"], ["type", "technique", "evidence"])
    for detection in result.ordered():
        table.rows.append([detection.type_tag.value, TYPE_NAMES[detection.type_tag], detection.evidence])
    out.write(render_table(table, cfg.format))
    return EXIT_OK


def _analyze(cfg, console: Console):
    analyzer = _build_analyzer(cfg)
    records, stats = _open_records(cfg)
    counters = run_analysis(analyzer, records, jobs=cfg.jobs)
    _print_ingest(stats, console)
    for name, count in sorted(counters.diagnostics.items()):
        logger.info("%s: %d", name, count)
    return analyzer, counters, stats


def cmd_analyze(cfg, out: TextIO, console: Console) -> int:
    analyzer, counters, stats = _analyze(cfg, console)
    metadata = {}
    if not cfg.no_meta:
        metadata = {
            "input": str(cfg.target),
            "config_digest": analyzer.digest,
            "generated_at": datetime.now(timezone.utc).replace(microsecond=0).isoformat(),
            "schema_version": SCHEMA_VERSION,
            "ingest": stats.as_dict(),
            "rounding": cfg.rounding,
        }
    report = finalize(counters, top_n=cfg.top, rounding=Rounding(cfg.rounding), metadata=metadata)
    out.write(render(report, cfg.format))
    return EXIT_OK


def cmd_lexicon(cfg, out: TextIO, console: Console) -> int:
    records, stats = _open_records(cfg)
    entries = build_lexicon((r.url for r in records), cfg.top, cfg.min_len)
    _print_ingest(stats, console)
    rounding = Rounding(cfg.rounding)
    table = Table("T5", "Frequency of word tokens", ["token", "url_count", "percentage"])
    for entry in entries:
        table.rows.append([entry.token, entry.url_count, format_fixed(entry.percentage, PLACES["T5"], rounding) + "%"])
    out.write(render_table(table, cfg.format))
    return EXIT_OK


def cmd_trend(cfg, out: TextIO, console: Console) -> int:
    _, counters, _ = _analyze(cfg, console)
    report = finalize(counters, top_n=cfg.top, rounding=Rounding(cfg.rounding))
    out.write(render_table(report.tables[TREND_TABLES[cfg.feature]], cfg.format))
    return EXIT_OK


def cmd_fetch(cfg, out: TextIO) -> int:
    saved = fetch_feed(feed_endpoint(cfg.target or cfg.feed_url), cfg.output, timeout=cfg.timeout)
    out.write(json.dumps({"saved": str(saved), "bytes": saved.stat().st_size}) + "\n")
    return EXIT_OK


def run(argv: list[str], stdout: TextIO | None = None, stderr: TextIO | None = None) -> int:
    """Run one command and return its exit code"""
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    console = Console(file=err) if stderr is not None else Console(stderr=True)
    try:
        args = build_parser().parse_args(argv)
        if args.command not in COMMANDS:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        configure_logging(-1 if args.quiet else args.verbose, err if stderr is not None else None)
        cfg = _config_from_args(args)
    except (UsageError, ConfigError) as e:
        err.write(f"{e}\n")
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else EXIT_OK

    try:
        if cfg.command == "classify":
            return cmd_classify(cfg, out, err)
        if cfg.command == "analyze":
            return cmd_analyze(cfg, out, console)
        if cfg.command == "lexicon":
            return cmd_lexicon(cfg, out, console)
        if cfg.command == "trend":
            return cmd_trend(cfg, out, console)
        return cmd_fetch(cfg, out)
    except ConfigError as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except FileUnreadable as e:
        logger.error("%s", e)
        return EXIT_NOINPUT
    except NetworkFailure as e:
        logger.error("%s", e)
        return EXIT_UNAVAILABLE
    except (HeaderMismatch, EmptyAnalysis, EmptyCorpus, NonCsvPayload, DatasetError) as e:
        logger.error("%s", e)
        return EXIT_DATA
