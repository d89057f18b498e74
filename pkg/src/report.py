import csv
import enum
import io
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from dataset import PhishRecord, year_of
from detectors import TypeTag, UrlClassification
from lexicon import rank_tokens
from url_model import COMPONENTS, PhishCensusError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FORMATS = ("json", "csv", "markdown")

REFERENCE_LABEL = "Garera et al. 2007 [PAPER]"

# Prior-work figures quoted next to ours; they cannot be recomputed
REFERENCE_TYPES_2007 = {TypeTag.I: "63.6%", TypeTag.II: "39.7%"}
REFERENCE_WORDS_2007 = {
    "confirm": "4.25%", "account": "4.9%", "banking": "7.95%", "secure": "9.88%",
    "ebayisapi": "13.9%", "webscr": "14.2%", "login": "21.53%", "signin": "23.29%",
}

COMPONENT_DESCRIPTIONS = {
    "scheme": "network communication protocol",
    "netloc": "network location (host or domain)",
    "path": "hierarchical path to the resource",
    "params": "path parameters of the last segment",
    "query": "query string",
    "fragment": "fragment identifier",
}

TYPE_NAMES = {
    TypeTag.I: "Obfuscating hostname with an IP address",
    TypeTag.II: "Obfuscating the host with another domain",
    TypeTag.III: "Obfuscating with large host names",
    TypeTag.IV: "Obfuscating with unknown or misspelt domain",
    TypeTag.V: "Obfuscating with HTTPS schema",
    TypeTag.VI: "Obfuscating with internationalized domain names",
}

# Printed precision per table
PLACES = {"T1": 1, "T2": 2, "types": 2, "words": 3, "T5": 3, "T6": 2, "T7": 2, "L": 2}

WORDLIST_TABLES = {"garera2007": "T3", "le2011": "T4"}


class ReportError(PhishCensusError):
    pass


class ConfigMismatch(ReportError):
    pass


class EmptyAnalysis(ReportError):
    pass


class UnsupportedFormat(ReportError):
    pass


class Rounding(enum.Enum):
    # Published percentages are truncated, not rounded
    DOWN = "down"
    HALF_UP = "half-up"


def format_fixed(value: Fraction, places: int, rounding: Rounding = Rounding.DOWN) -> str:
    """Exact decimal rendering of a rational at a fixed precision"""
    scaled = value * 10 ** places
    if rounding is Rounding.HALF_UP:
        scaled += Fraction(1, 2) if scaled >= 0 else Fraction(-1, 2)
    units = int(scaled)  # int() truncates toward zero
    sign = "-" if units < 0 else ""
    digits = str(abs(units)).rjust(places + 1, "0")
    if places == 0:
        return sign + digits
    return f"{sign}{digits[:-places]}.{digits[-places:]}"


def format_percentage(count: int, total: int, places: int, rounding: Rounding = Rounding.DOWN) -> str:
    return format_fixed(Fraction(count * 100, total), places, rounding) + "%"


@dataclass
class LengthStats:
    count: int = 0
    total: int = 0
    maximum: int = 0

    def add(self, value: int):
        self.count += 1
        self.total += value
        self.maximum = max(self.maximum, value)

    def merged(self, other: "LengthStats") -> "LengthStats":
        return LengthStats(self.count + other.count, self.total + other.total, max(self.maximum, other.maximum))


@dataclass
class FeatureCounters:
    """Mergeable aggregation state for one analysis configuration"""

    config_digest: str = ""
    # (list name, words) pairs in table order
    wordlists: tuple = ()
    type3_threshold: int = 15
    total_urls: int = 0
    parsed_urls: int = 0
    per_component_present: Counter = field(default_factory=Counter)
    per_type: Counter = field(default_factory=Counter)
    per_word: Counter = field(default_factory=Counter)
    per_token: Counter = field(default_factory=Counter)
    per_year_total: Counter = field(default_factory=Counter)
    per_year_scheme: Counter = field(default_factory=Counter)
    per_year_idn: Counter = field(default_factory=Counter)
    extra_length: LengthStats = field(default_factory=LengthStats)
    url_length: LengthStats = field(default_factory=LengthStats)
    long_hosts: int = 0
    # records whose feed row names a spoofed organisation
    targeted: int = 0
    latest_submission: str = ""
    diagnostics: Counter = field(default_factory=Counter)

    def empty_copy(self) -> "FeatureCounters":
        return FeatureCounters(config_digest=self.config_digest, wordlists=self.wordlists,
                               type3_threshold=self.type3_threshold)


def accumulate(counters: FeatureCounters, record: PhishRecord, classification: UrlClassification | None,
               tokens: Iterable[str]) -> FeatureCounters:
    """Fold one URL into the counters (in place) and return them.

    classification is None for URLs that failed to parse; they still count
    toward totals, words, tokens and years.
    """
    counters.total_urls += 1
    raw = record.url
    lowered = raw.lower()
    year = year_of(record)

    if classification is not None:
        counters.parsed_urls += 1
        for name in classification.url.present_components():
            counters.per_component_present[name] += 1
        types = classification.types
        for detection in classification.detections:
            counters.per_type[detection.type_tag.value] += 1
            if detection.type_tag is TypeTag.II:
                if detection.score_inputs.get("metadata_mode"):
                    counters.per_type["II:metadata"] += 1
                if detection.score_inputs.get("heuristic_mode"):
                    counters.per_type["II:heuristic"] += 1
        if not types:
            counters.per_type["none"] += 1
        if classification.extra_length is not None:
            counters.extra_length.add(classification.extra_length)
            if classification.extra_length >= counters.type3_threshold:
                counters.long_hosts += 1
        is_https = classification.url.scheme == "https"
        if TypeTag.VI in types:
            counters.per_year_idn[year] += 1
    else:
        counters.diagnostics["unparseable_url"] += 1
        is_https = False

    for name, words in counters.wordlists:
        for word in words:
            if word in lowered:
                counters.per_word[(name, word)] += 1
    counters.per_token.update(set(tokens))

    if record.target_hint is not None:
        counters.targeted += 1
    counters.per_year_total[year] += 1
    counters.per_year_scheme[(year, "https" if is_https else "other")] += 1
    counters.url_length.add(len(raw))
    counters.latest_submission = max(counters.latest_submission, record.submission_time.date().isoformat())
    return counters


def merge(a: FeatureCounters, b: FeatureCounters) -> FeatureCounters:
    """Pointwise sum (max for maxima); both sides must share a configuration"""
    if a.config_digest != b.config_digest or a.wordlists != b.wordlists or a.type3_threshold != b.type3_threshold:
        raise ConfigMismatch(f"cannot merge counters built with {a.config_digest!r} and {b.config_digest!r}")
    return FeatureCounters(
        config_digest=a.config_digest,
        wordlists=a.wordlists,
        type3_threshold=a.type3_threshold,
        total_urls=a.total_urls + b.total_urls,
        parsed_urls=a.parsed_urls + b.parsed_urls,
        per_component_present=a.per_component_present + b.per_component_present,
        per_type=a.per_type + b.per_type,
        per_word=a.per_word + b.per_word,
        per_token=a.per_token + b.per_token,
        per_year_total=a.per_year_total + b.per_year_total,
        per_year_scheme=a.per_year_scheme + b.per_year_scheme,
        per_year_idn=a.per_year_idn + b.per_year_idn,
        extra_length=a.extra_length.merged(b.extra_length),
        url_length=a.url_length.merged(b.url_length),
        long_hosts=a.long_hosts + b.long_hosts,
        targeted=a.targeted + b.targeted,
        latest_submission=max(a.latest_submission, b.latest_submission),
        diagnostics=a.diagnostics + b.diagnostics,
    )


@dataclass
class Table:
    key: str
    title: str
    columns: list
    rows: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"key": self.key, "title": self.title, "columns": list(self.columns),
                "rows": [list(r) for r in self.rows]}

    @classmethod
    def from_dict(cls, data: dict) -> "Table":
        return cls(data["key"], data["title"], list(data["columns"]), [list(r) for r in data["rows"]])


@dataclass
class AnalysisReport:
    tables: dict
    metadata: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "metadata": self.metadata,
            "tables": [t.to_dict() for t in self.tables.values()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnalysisReport":
        tables = [Table.from_dict(t) for t in data["tables"]]
        return cls(tables={t.key: t for t in tables}, metadata=dict(data.get("metadata", {})),
                   schema_version=data["schema_version"])

    @classmethod
    def from_json(cls, text: str) -> "AnalysisReport":
        return cls.from_dict(json.loads(text))


def _year_rows(per_year_count: Counter, per_year_total: Counter, rounding: Rounding) -> list:
    rows = []
    for year in sorted(per_year_total, reverse=True):
        total = per_year_total[year]
        count = per_year_count[year]
        rows.append([year, count, total, format_percentage(count, total, PLACES["T6"], rounding)])
    return rows


def finalize(counters: FeatureCounters, top_n: int = 10, rounding: Rounding = Rounding.DOWN,
             metadata: dict | None = None) -> AnalysisReport:
    """Turn counters into the table set; denominators are total_urls except per-year tables"""
    total = counters.total_urls
    if total < 1:
        raise EmptyAnalysis("no URLs were analysed")

    def pct(count, places):
        return format_percentage(count, total, places, rounding)

    tables = {}

    t1 = Table("T1", "URL components distribution", ["component", "description", "count", "percentage"])
    for name in COMPONENTS:
        count = counters.per_component_present[name]
        t1.rows.append([name, COMPONENT_DESCRIPTIONS[name], count, pct(count, PLACES["T1"])])
    tables["T1"] = t1

    t2 = Table("T2", "Type I and Type II comparison",
               ["technique", REFERENCE_LABEL, "count", "percentage",
                "metadata_count", "metadata_percentage", "heuristic_count", "heuristic_percentage"])
    type1 = counters.per_type[TypeTag.I.value]
    t2.rows.append([f"Type I - {TYPE_NAMES[TypeTag.I]}", REFERENCE_TYPES_2007[TypeTag.I],
                    type1, pct(type1, PLACES["T2"]), "", "", "", ""])
    type2 = counters.per_type[TypeTag.II.value]
    by_metadata = counters.per_type["II:metadata"]
    by_heuristic = counters.per_type["II:heuristic"]
    t2.rows.append([f"Type II - {TYPE_NAMES[TypeTag.II]}", REFERENCE_TYPES_2007[TypeTag.II],
                    type2, pct(type2, PLACES["T2"]),
                    by_metadata, pct(by_metadata, PLACES["T2"]),
                    by_heuristic, pct(by_heuristic, PLACES["T2"])])
    t2.rows.append(["Records naming a spoofed organisation", "", "", "",
                    counters.targeted, pct(counters.targeted, PLACES["T2"]), "", ""])
    tables["T2"] = t2

    types = Table("types", "Obfuscation type prevalence", ["type", "technique", "count", "percentage"])
    for tag in TypeTag:
        count = counters.per_type[tag.value]
        types.rows.append([f"Type {tag.value}", TYPE_NAMES[tag], count, pct(count, PLACES["types"])])
    unmatched = counters.per_type["none"]
    types.rows.append(["none", "no technique detected", unmatched, pct(unmatched, PLACES["types"])])
    tables["types"] = types

    for name, words in counters.wordlists:
        key = WORDLIST_TABLES.get(name, f"W:{name}")
        with_reference = name == "garera2007"
        columns = ["word", REFERENCE_LABEL, "count", "percentage"] if with_reference else ["word", "count", "percentage"]
        table = Table(key, f"Suggestive word presence ({name})", columns)
        for word in words:
            count = counters.per_word[(name, word)]
            row = [word, count, pct(count, PLACES["words"])]
            if with_reference:
                row.insert(1, REFERENCE_WORDS_2007.get(word, ""))
            table.rows.append(row)
        tables[key] = table

    t5 = Table("T5", "Frequency of word tokens", ["token", "url_count", "percentage"])
    for entry in rank_tokens(counters.per_token, total, top_n) if counters.per_token else []:
        t5.rows.append([entry.token, entry.url_count, pct(entry.url_count, PLACES["T5"])])
    tables["T5"] = t5

    until = f" (latest submission {counters.latest_submission})" if counters.latest_submission else ""
    https_by_year = Counter({year: n for (year, cls), n in counters.per_year_scheme.items() if cls == "https"})
    tables["T6"] = Table("T6", f"Https protocol usage in phishing URLs{until}",
                         ["year", "https", "total", "percentage"],
                         _year_rows(https_by_year, counters.per_year_total, rounding))
    tables["T7"] = Table("T7", f"Usage of IDN in phishing URLs{until}",
                         ["year", "idn", "total", "percentage"],
                         _year_rows(counters.per_year_idn, counters.per_year_total, rounding))

    lengths = Table("L", "Length statistics (IP hosts excluded from host figures)", ["metric", "value"])
    extra = counters.extra_length
    lengths.rows.append(["urls_measured", extra.count])
    lengths.rows.append(["mean_extra_hostname_length",
                         format_fixed(Fraction(extra.total, extra.count), PLACES["L"], rounding) if extra.count else ""])
    lengths.rows.append(["max_extra_hostname_length", extra.maximum])
    lengths.rows.append(["hosts_at_type3_threshold", counters.long_hosts])
    lengths.rows.append(["longest_url_length", counters.url_length.maximum])
    lengths.rows.append(["mean_url_length",
                         format_fixed(Fraction(counters.url_length.total, counters.url_length.count),
                                      PLACES["L"], rounding)])
    tables["L"] = lengths

    return AnalysisReport(tables=tables, metadata=dict(metadata or {}))


def _markdown_table(table: Table) -> str:
    def cell(value):
        return str(value).replace("|", "\\|")

    lines = [f"### {table.key}. {table.title}", "",
             "| " + " | ".join(cell(c) for c in table.columns) + " |",
             "|" + "|".join("---" for _ in table.columns) + "|"]
    for row in table.rows:
        lines.append("| " + " | ".join(cell(v) for v in row) + " |")
    return "\n".join(lines) + "\n"


def render_table(table: Table, fmt: str) -> str:
    """Render a single table on its own (used by the lexicon and trend commands)"""
    if fmt == "json":
        return json.dumps(table.to_dict(), indent=2, ensure_ascii=False) + "\n"
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(table.columns)
        writer.writerows(table.rows)
        return out.getvalue()
    if fmt == "markdown":
        return _markdown_table(table)
    raise UnsupportedFormat(f"unsupported format {fmt!r} (expected one of {', '.join(FORMATS)})")


def render(report: AnalysisReport, fmt: str) -> str:
    """Deterministic text for a report in json, csv or markdown; only json carries the metadata"""
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n"
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["table", "row", "column", "value"])
        for table in report.tables.values():
            for row in table.rows:
                for column, value in zip(table.columns, row):
                    writer.writerow([table.key, row[0], column, value])
        return out.getvalue()
    if fmt == "markdown":
        text = f"# Phishing URL analysis (schema {report.schema_version})\n\n"
        return text + "\n".join(_markdown_table(t) for t in report.tables.values())
    raise UnsupportedFormat(f"unsupported format {fmt!r} (expected one of {', '.join(FORMATS)})")
