import csv
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Iterator

import requests

from url_model import PhishCensusError

logger = logging.getLogger(__name__)

PHISHTANK_COLUMNS = (
    "phish_id", "url", "phish_detail_url", "submission_time",
    "verified", "verification_time", "online", "target",
)

DEFAULT_FEED_URL = "http://data.phishtank.com/data/online-valid.csv"
FEED_URL_ENV = "PHISHCENSUS_FEED_URL"

NO_TARGET = "Other"

_TRUE = {"yes", "true", "1", "y", "t"}
_FALSE = {"no", "false", "0", "n", "f"}

# csv module refuses fields beyond this; PhishTank URLs stay far below it
csv.field_size_limit(16 * 1024 * 1024)


class DatasetError(PhishCensusError):
    pass


class FileUnreadable(DatasetError):
    pass


class HeaderMismatch(DatasetError):
    def __init__(self, missing: list[str]):
        super().__init__(f"CSV header is missing columns: {', '.join(missing)}")
        self.missing = missing


class NetworkFailure(DatasetError):
    pass


class NonCsvPayload(DatasetError):
    pass


class DestinationUnwritable(DatasetError):
    pass


@dataclass(frozen=True)
class PhishRecord:
    """One verified-phish row of a PhishTank feed"""

    phish_id: int
    url: str
    detail_url: str
    submission_time: datetime
    verified: bool
    verification_time: datetime | None
    online: bool
    target: str

    @property
    def target_hint(self) -> str | None:
        """Spoofed organisation, or None when PhishTank could not resolve one"""
        target = self.target.strip()
        if not target or target.lower() == NO_TARGET.lower():
            return None
        return target


@dataclass
class IngestStats:
    rows_read: int = 0
    records_ok: int = 0
    rows_skipped: int = 0
    parse_failures_by_kind: Counter = field(default_factory=Counter)
    replacement_chars: int = 0

    def skip(self, kind: str):
        self.rows_skipped += 1
        self.parse_failures_by_kind[kind] += 1

    def as_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "records_ok": self.records_ok,
            "rows_skipped": self.rows_skipped,
            "parse_failures_by_kind": dict(sorted(self.parse_failures_by_kind.items())),
            "replacement_chars": self.replacement_chars,
        }


class _RowRejected(Exception):
    def __init__(self, kind: str):
        super().__init__(kind)
        self.kind = kind


def _parse_timestamp(text: str, kind: str) -> datetime:
    try:
        stamp = datetime.fromisoformat(text.strip())
    except ValueError:
        raise _RowRejected(kind)
    # Year bucketing needs the zone the feed recorded
    if stamp.tzinfo is None:
        raise _RowRejected(kind)
    return stamp


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise _RowRejected("BadBoolean")


def _record_from_row(row: list[str], index: dict[str, int]) -> PhishRecord:
    def col(name):
        return row[index[name]]

    url = col("url").strip()
    if not url:
        raise _RowRejected("EmptyUrl")
    try:
        phish_id = int(col("phish_id").strip())
    except ValueError:
        raise _RowRejected("BadPhishId")
    submission_time = _parse_timestamp(col("submission_time"), "BadTimestamp")
    verification_text = col("verification_time").strip()
    verification_time = _parse_timestamp(verification_text, "BadVerificationTime") if verification_text else None
    return PhishRecord(
        phish_id=phish_id,
        url=url,
        detail_url=col("phish_detail_url").strip(),
        submission_time=submission_time,
        verified=_parse_bool(col("verified")),
        verification_time=verification_time,
        online=_parse_bool(col("online")),
        target=col("target").strip() or NO_TARGET,
    )


def _header_index(header: list[str]) -> dict[str, int]:
    names = [h.strip().lstrip("\ufeff").lower() for h in header]
    missing = [c for c in PHISHTANK_COLUMNS if c not in names]
    if missing:
        raise HeaderMismatch(missing)
    return {c: names.index(c) for c in PHISHTANK_COLUMNS}


def _records(handle, reader, index: dict[str, int], width: int, stats: IngestStats,
             dedupe_url: bool) -> Iterator[PhishRecord]:
    seen_ids = set()
    seen_urls = set()
    with handle:
        while True:
            try:
                row = next(reader)
            except StopIteration:
                break
            except csv.Error as e:
                stats.rows_read += 1
                stats.skip("MalformedCsv")
                logger.debug("line %d: %s", reader.line_num, e)
                continue
            if not row:
                continue
            stats.rows_read += 1
            stats.replacement_chars += sum(cell.count("\ufffd") for cell in row)
            if len(row) != width:
                stats.skip("ColumnCount")
                continue
            try:
                record = _record_from_row(row, index)
                if record.phish_id in seen_ids:
                    raise _RowRejected("DuplicateId")
                if dedupe_url:
                    if record.url in seen_urls:
                        raise _RowRejected("DuplicateUrl")
                    seen_urls.add(record.url)
            except _RowRejected as e:
                stats.skip(e.kind)
                continue
            seen_ids.add(record.phish_id)
            stats.records_ok += 1
            yield record


def load_csv(path: str | Path, dedupe_url: bool = False) -> tuple[Iterator[PhishRecord], IngestStats]:
    """Open a PhishTank CSV and return a lazy record stream plus its stats.

    The header is checked immediately; the stats fill in while the stream is consumed.
    """
    try:
        handle = open(path, encoding="utf-8", errors="replace", newline="")
    except OSError as e:
        raise FileUnreadable(f"cannot open {path}: {e}") from e
    reader = csv.reader(handle)
    try:
        header = next(reader)
    except StopIteration:
        handle.close()
        raise HeaderMismatch(list(PHISHTANK_COLUMNS))
    except (csv.Error, OSError) as e:
        handle.close()
        raise FileUnreadable(f"cannot read {path}: {e}") from e
    try:
        index = _header_index(header)
    except HeaderMismatch:
        handle.close()
        raise
    stats = IngestStats()
    return _records(handle, reader, index, len(header), stats, dedupe_url), stats


def year_of(r: PhishRecord) -> int:
    """Calendar year of submission in the timestamp's own offset"""
    return r.submission_time.year


@dataclass(frozen=True)
class RecordFilter:
    """Conjunction of optional record predicates; None means 'any'"""

    verified: bool | None = None
    online: bool | None = None
    year_from: int | None = None
    year_to: int | None = None
    has_target: bool | None = None

    def matches(self, r: PhishRecord) -> bool:
        if self.verified is not None and r.verified != self.verified:
            return False
        if self.online is not None and r.online != self.online:
            return False
        year = year_of(r)
        if self.year_from is not None and year < self.year_from:
            return False
        if self.year_to is not None and year > self.year_to:
            return False
        if self.has_target is not None and (r.target_hint is not None) != self.has_target:
            return False
        return True

    @property
    def is_empty(self) -> bool:
        return self == RecordFilter()


def filter_records(stream: Iterable[PhishRecord], predicate: RecordFilter) -> Iterator[PhishRecord]:
    return (r for r in stream if predicate.matches(r))


def feed_endpoint(explicit: str | None = None) -> str:
    return explicit or os.environ.get(FEED_URL_ENV) or DEFAULT_FEED_URL


def _check_feed_file(path: Path):
    if path.stat().st_size == 0:
        raise NonCsvPayload("feed response was empty")
    with open(path, encoding="utf-8", errors="replace", newline="") as handle:
        try:
            header = next(csv.reader(handle))
        except (StopIteration, csv.Error) as e:
            raise NonCsvPayload(f"feed response has no CSV header: {e}") from e
    try:
        _header_index(header)
    except HeaderMismatch as e:
        raise NonCsvPayload(f"feed response is not a PhishTank CSV ({e})") from e


def _discard(path: Path):
    try:
        path.unlink(missing_ok=True)
    except OSError as e:
        logger.debug("cannot remove %s: %s", path, e)


def fetch_feed(endpoint: str, destination: str | Path, timeout: float = 30.0,
               chunk_size: int = 64 * 1024) -> Path:
    """Stream a feed to destination; only a verified CSV replaces the target file"""
    destination = Path(destination)
    partial = destination.with_name(destination.name + ".part")
    logger.info("fetching %s -> %s", endpoint, destination)
    try:
        with requests.get(endpoint, stream=True, timeout=timeout) as response:
            response.raise_for_status()
            destination.parent.mkdir(parents=True, exist_ok=True)
            with open(partial, "wb") as out:
                for chunk in response.iter_content(chunk_size=chunk_size):
                    if chunk:
                        out.write(chunk)
    # RequestException is itself an OSError
    except requests.RequestException as e:
        _discard(partial)
        raise NetworkFailure(f"fetching {endpoint} failed: {e}") from e
    except OSError as e:
        _discard(partial)
        raise DestinationUnwritable(f"cannot write {partial}: {e}") from e

    try:
        _check_feed_file(partial)
    except NonCsvPayload:
        _discard(partial)
        raise
    try:
        partial.replace(destination)
    except OSError as e:
        _discard(partial)
        raise DestinationUnwritable(f"cannot replace {destination}: {e}") from e
    logger.info("saved %d bytes to %s", destination.stat().st_size, destination)
    return destination
