import logging
import re
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from url_model import PhishCensusError

logger = logging.getLogger(__name__)

DEFAULT_MIN_LEN = 5

# Tokens are maximal ASCII alphanumeric runs; everything else delimits
_DELIMITER_RE = re.compile(r"[^a-z0-9]+")


class LexiconError(PhishCensusError):
    pass


class EmptyCorpus(LexiconError):
    """Word statistics were requested over zero URLs"""


class WordListError(LexiconError):
    pass


@dataclass(frozen=True)
class WordList:
    """Curated suggestive words, tested by case-insensitive substring presence"""

    name: str
    words: tuple[str, ...]

    def __post_init__(self):
        if not self.words:
            raise WordListError(f"word list {self.name!r} is empty")
        seen = set()
        for word in self.words:
            if not word or word != word.lower():
                raise WordListError(f"word list {self.name!r}: {word!r} must be non-empty lowercase")
            if word in seen:
                raise WordListError(f"word list {self.name!r}: duplicate {word!r}")
            seen.add(word)

    @classmethod
    def from_file(cls, path: str | Path, name: str | None = None) -> "WordList":
        """One word per line, '#' starts a comment"""
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise WordListError(f"cannot read word list {path}: {e}") from e
        words = []
        for line in text.splitlines():
            word = line.split("#", 1)[0].strip()
            if word:
                words.append(word)
        return cls(name=name or path.stem, words=tuple(words))


@dataclass(frozen=True)
class LexiconEntry:
    token: str
    url_count: int
    percentage: Fraction


@dataclass(frozen=True)
class WordPresence:
    word: str
    count: int
    percentage: Fraction


def percentage(count: int, total: int) -> Fraction:
    return Fraction(count * 100, total)


def contains_word(raw_url: str, word: str) -> bool:
    """Boolean, case-insensitive substring test over the whole URL text"""
    return word in raw_url.lower()


def word_presence(corpus: Iterable[str], wordlist: WordList) -> list[WordPresence]:
    counts = Counter()
    total = 0
    for raw_url in corpus:
        total += 1
        lowered = raw_url.lower()
        for word in wordlist.words:
            if word in lowered:
                counts[word] += 1
    if total == 0:
        raise EmptyCorpus("word presence over an empty corpus")
    return [WordPresence(word, counts[word], percentage(counts[word], total)) for word in wordlist.words]


def extract_tokens(raw_url: str, min_len: int = DEFAULT_MIN_LEN) -> set[str]:
    """Distinct lowercase alphanumeric tokens of at least min_len characters"""
    if min_len < 1:
        raise ValueError("min_len must be >= 1")
    return {token for token in _DELIMITER_RE.split(raw_url.lower()) if len(token) >= min_len}


def rank_tokens(token_counts: Counter, total: int, top_n: int) -> list[LexiconEntry]:
    """Count-descending, ties by token ascending"""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    if total == 0:
        raise EmptyCorpus("lexicon over an empty corpus")
    ranked = sorted(token_counts.items(), key=lambda item: (-item[1], item[0]))[:top_n]
    return [LexiconEntry(token, count, percentage(count, total)) for token, count in ranked]


def build_lexicon(corpus: Iterable[str], top_n: int, min_len: int = DEFAULT_MIN_LEN) -> list[LexiconEntry]:
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    token_counts = Counter()
    total = 0
    for raw_url in corpus:
        total += 1
        token_counts.update(extract_tokens(raw_url, min_len))
    logger.debug("lexicon: %d URLs, %d distinct tokens", total, len(token_counts))
    return rank_tokens(token_counts, total, top_n)
