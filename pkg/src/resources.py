import logging
import os
from pathlib import Path

from detectors import load_brand_list
from lexicon import WordList, WordListError
from url_model import PublicSuffixSnapshot

logger = logging.getLogger(__name__)

DATA_DIR_ENV = "PHISHCENSUS_DATA_DIR"
DEFAULT_DATA_DIR = Path(__file__).resolve().parent.parent / "data"

# Word lists analysed when the user gives none, in table order
DEFAULT_WORDLISTS = ("garera2007", "le2011", "paper2019")


class ResourceManager:
    """Locates and caches the bundled data files (word lists and brands) and the suffix snapshot.

    Scans data/wordlists for .txt files and exposes them by basename key.
    """

    def __init__(self, base_path: str | Path | None = None):
        self.base_path = Path(base_path) if base_path else None
        self.wordlist_paths: dict[str, Path] = {}
        self.aliases: dict[str, str] = {}
        self._wordlists: dict[str, WordList] = {}
        self._brands: tuple[str, ...] | None = None
        self._suffixes: PublicSuffixSnapshot | None = None
        self._scanned = False

    @property
    def data_dir(self) -> Path:
        if self.base_path is not None:
            return self.base_path
        return Path(os.environ.get(DATA_DIR_ENV) or DEFAULT_DATA_DIR)

    def _scan(self):
        if self._scanned:
            return
        self._scanned = True
        folder = self.data_dir / "wordlists"
        if not folder.is_dir():
            logger.warning("[RES] no word list folder at %s", folder)
            return
        logger.debug("[RES] scanning word lists in %s", folder)
        for path in sorted(folder.iterdir()):
            if path.is_file() and path.suffix.lower() == ".txt":
                self.wordlist_paths[path.stem] = path
        # Friendlier keys
        self.aliases.update({
            "garera": "garera2007",
            "le": "le2011",
            "phishdef": "le2011",
            "paper": "paper2019",
            "lexicon2019": "paper2019",
        })
        logger.debug("[RES] word lists: %s", sorted(self.wordlist_paths))

    def resolve_key(self, key: str) -> str:
        self._scan()
        if key in self.wordlist_paths:
            return key
        return self.aliases.get(key, key)

    def wordlist(self, key: str) -> WordList:
        resolved = self.resolve_key(key)
        if resolved not in self._wordlists:
            path = self.wordlist_paths.get(resolved)
            if path is None:
                raise WordListError(f"unknown word list {key!r}")
            self._wordlists[resolved] = WordList.from_file(path, name=resolved)
        return self._wordlists[resolved]

    def has_wordlist(self, key: str) -> bool:
        return self.resolve_key(key) in self.wordlist_paths

    def default_wordlists(self) -> list[WordList]:
        return [self.wordlist(key) for key in DEFAULT_WORDLISTS]

    def default_brands(self) -> tuple[str, ...]:
        if self._brands is None:
            path = self.data_dir / "brands.txt"
            self._brands = load_brand_list(path)
            logger.debug("[RES] loaded %d brands from %s", len(self._brands), path)
        return self._brands

    def suffix_snapshot(self) -> PublicSuffixSnapshot:
        if self._suffixes is None:
            self._suffixes = PublicSuffixSnapshot.bundled()
        return self._suffixes


# Singleton-like instance
resources = ResourceManager()
