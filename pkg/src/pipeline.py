import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import islice
from pathlib import Path
from typing import Iterable, Iterator

from dataset import PhishRecord
from detectors import DetectorConfig, Type2Mode, classify, drain_failures, load_brand_list
from lexicon import DEFAULT_MIN_LEN, WordList, extract_tokens
from report import FeatureCounters, accumulate, merge
from resources import resources
from url_model import PublicSuffixSnapshot, UrlParseError, parse_url

logger = logging.getLogger(__name__)

CHUNK_SIZE = 5000


@dataclass(frozen=True)
class AnalysisSettings:
    """Picklable description of one analysis; every worker rebuilds its Analyzer from it"""

    type3_threshold: int = 15
    edit_distance: int = 2
    brands_path: str | None = None
    suffixes_path: str | None = None
    # word list files or bundled keys
    wordlists: tuple = ()
    min_len: int = DEFAULT_MIN_LEN
    type2_mode: str = Type2Mode.BOTH.value


class Analyzer:
    """Classifies records and folds them into FeatureCounters"""

    def __init__(self, settings: AnalysisSettings):
        self.settings = settings
        suffixes = PublicSuffixSnapshot(settings.suffixes_path) if settings.suffixes_path \
            else resources.suffix_snapshot()
        brands = load_brand_list(settings.brands_path) if settings.brands_path else resources.default_brands()
        self.config = DetectorConfig(
            suffixes=suffixes,
            brand_list=brands,
            type3_length_threshold=settings.type3_threshold,
            type4_max_edit_distance=settings.edit_distance,
            type2_mode=Type2Mode(settings.type2_mode),
        )
        if settings.wordlists:
            self.wordlists = [WordList.from_file(w) if Path(w).is_file() else resources.wordlist(w)
                              for w in settings.wordlists]
        else:
            self.wordlists = resources.default_wordlists()
        self.digest = self._digest()

    def _digest(self) -> str:
        fields = dict(self.config.digest_fields())
        fields["suffixes_sha256"] = hashlib.sha256(self.config.suffixes.path.read_bytes()).hexdigest()
        fields["wordlists"] = [[w.name, list(w.words)] for w in self.wordlists]
        fields["min_len"] = self.settings.min_len
        blob = json.dumps(fields, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def new_counters(self) -> FeatureCounters:
        return FeatureCounters(
            config_digest=self.digest,
            wordlists=tuple((w.name, w.words) for w in self.wordlists),
            type3_threshold=self.config.type3_length_threshold,
        )

    def classify_record(self, record: PhishRecord):
        try:
            parsed = parse_url(record.url)
        except UrlParseError as e:
            logger.debug("record %d: %s", record.phish_id, e)
            return None
        return classify(parsed, self.config, record.target_hint)

    def accumulate_records(self, records: Iterable[PhishRecord],
                           counters: FeatureCounters | None = None) -> FeatureCounters:
        counters = counters if counters is not None else self.new_counters()
        for record in records:
            accumulate(counters, record, self.classify_record(record),
                       extract_tokens(record.url, self.settings.min_len))
        for name, count in drain_failures().items():
            counters.diagnostics[f"detector_failure:{name}"] += count
        return counters


_worker_analyzer: Analyzer | None = None


def _init_worker(settings: AnalysisSettings):
    global _worker_analyzer
    _worker_analyzer = Analyzer(settings)


def _accumulate_chunk(chunk: list) -> FeatureCounters:
    return _worker_analyzer.accumulate_records(chunk)


def _chunks(records: Iterable[PhishRecord], size: int) -> Iterator[list]:
    iterator = iter(records)
    while True:
        chunk = list(islice(iterator, size))
        if not chunk:
            return
        yield chunk


def run_analysis(analyzer: Analyzer, records: Iterable[PhishRecord], jobs: int = 1,
                 chunk_size: int = CHUNK_SIZE) -> FeatureCounters:
    """Accumulate a record stream, fanning chunks out to worker processes when jobs > 1.

    The result does not depend on jobs: workers own private counters that are merged.
    """
    if jobs <= 1:
        return analyzer.accumulate_records(records)

    total = analyzer.new_counters()
    # Bound the number of chunks in flight so memory stays flat on large feeds
    max_pending = jobs * 2
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(analyzer.settings,)) as pool:
        pending = []
        for chunk in _chunks(records, chunk_size):
            pending.append(pool.submit(_accumulate_chunk, chunk))
            if len(pending) >= max_pending:
                total = merge(total, pending.pop(0).result())
        for future in pending:
            total = merge(total, future.result())
    logger.info("merged %d URLs from %d workers", total.total_urls, jobs)
    return total
