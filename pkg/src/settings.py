import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from dataset import RecordFilter
from detectors import Type2Mode
from pipeline import AnalysisSettings
from report import FORMATS, Rounding
from resources import resources
from url_model import PhishCensusError

logger = logging.getLogger(__name__)

ENV_PREFIX = "PHISHCENSUS_"
CONFIG_ENV = ENV_PREFIX + "CONFIG"

COMMANDS = ("classify", "analyze", "lexicon", "trend", "fetch")
FEATURES = ("https", "idn")

# Output format when neither flag, file nor environment picks one
DEFAULT_FORMATS = {"classify": "json", "analyze": "markdown", "lexicon": "csv", "trend": "markdown", "fetch": "json"}


class ConfigError(PhishCensusError):
    """An override is malformed or out of range"""


def _as_bool(text: str) -> bool:
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _as_list(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(text)
    return tuple(part.strip() for part in str(text).split(",") if part.strip())


# key -> (converter, default); these keys may come from flag, config file or environment
OPTIONS = {
    "format": (str, None),
    "type3_threshold": (int, 15),
    "edit_distance": (int, 2),
    "brands": (str, None),
    "suffixes": (str, None),
    "wordlist": (_as_list, ()),
    "top": (int, 10),
    "min_len": (int, 5),
    "type2_mode": (str, Type2Mode.BOTH.value),
    "dedupe_url": (_as_bool, False),
    "jobs": (int, 1),
    "no_meta": (_as_bool, False),
    "timeout": (float, 30.0),
    "feed_url": (str, None),
    "rounding": (str, Rounding.DOWN.value),
}


def _normalize_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def _coerce(key: str, value, origin: str):
    converter, _ = OPTIONS[key]
    try:
        return converter(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{origin}: bad value for {key}: {value!r} ({e})") from e


def load_config_file(path: str | Path) -> dict:
    """key = value lines, '#' comments; unknown keys are rejected"""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        key = _normalize_key(key)
        if key not in OPTIONS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value.strip(), f"{path}:{lineno}")
    return values


def load_environment(environ: Mapping[str, str]) -> dict:
    values = {}
    for key in OPTIONS:
        name = ENV_PREFIX + key.upper()
        if name in environ:
            values[key] = _coerce(key, environ[name], name)
    return values


@dataclass
class CliConfig:
    command: str
    # URL for classify, CSV path for analyze/lexicon/trend, endpoint for fetch
    target: str | None = None
    format: str = "json"
    type3_threshold: int = 15
    edit_distance: int = 2
    brands: str | None = None
    suffixes: str | None = None
    wordlist: tuple = ()
    top: int = 10
    min_len: int = 5
    type2_mode: str = Type2Mode.BOTH.value
    dedupe_url: bool = False
    jobs: int = 1
    no_meta: bool = False
    timeout: float = 30.0
    feed_url: str | None = None
    rounding: str = Rounding.DOWN.value
    verbosity: int = 0
    feature: str | None = None
    output: str | None = None
    target_hint: str | None = None
    record_filter: RecordFilter = field(default_factory=RecordFilter)

    def validate(self):
        """Reject bad overrides before any work starts"""
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {', '.join(FORMATS)}")
        if self.type3_threshold < 1:
            raise ConfigError("--type3-threshold must be >= 1")
        if self.edit_distance < 0:
            raise ConfigError("--edit-distance must be >= 0")
        if self.top < 1:
            raise ConfigError("--top must be >= 1")
        if self.min_len < 1:
            raise ConfigError("--min-len must be >= 1")
        if self.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if self.timeout <= 0:
            raise ConfigError("--timeout must be positive")
        if self.type2_mode not in {m.value for m in Type2Mode}:
            raise ConfigError("--type2-mode must be metadata, heuristic or both")
        if self.rounding not in {r.value for r in Rounding}:
            raise ConfigError("--rounding must be down or half-up")
        if self.command == "trend" and self.feature not in FEATURES:
            raise ConfigError(f"--feature must be one of {', '.join(FEATURES)}")
        for label, path in [("--brands", self.brands), ("--suffixes", self.suffixes)]:
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{label}: no such file {path}")
        for entry in self.wordlist:
            if not Path(entry).is_file() and not resources.has_wordlist(entry):
                raise ConfigError(f"--wordlist: {entry} is neither a file nor a bundled word list")
        return self

    def analysis_settings(self) -> AnalysisSettings:
        return AnalysisSettings(
            type3_threshold=self.type3_threshold,
            edit_distance=self.edit_distance,
            brands_path=self.brands,
            suffixes_path=self.suffixes,
            wordlists=tuple(self.wordlist),
            min_len=self.min_len,
            type2_mode=self.type2_mode,
        )


def resolve(command: str, flags: dict, environ: Mapping[str, str] | None = None,
            config_path: str | None = None, **extra) -> CliConfig:
    """Layer defaults < environment < config file < flags; flags set to None are 'not given'"""
    environ = os.environ if environ is None else environ
    values = {key: default for key, (_, default) in OPTIONS.items()}
    values["format"] = DEFAULT_FORMATS.get(command, "json")

    values.update(load_environment(environ))
    config_path = config_path or environ.get(CONFIG_ENV)
    if config_path:
        values.update(load_config_file(config_path))
        logger.debug("config file %s applied", config_path)
    for key, value in flags.items():
        key = _normalize_key(key)
        if key in OPTIONS and value is not None and value != () and value is not False:
            values[key] = _coerce(key, value, f"--{key.replace('_', '-')}")

    return CliConfig(command=command, **values, **extra).validate()
