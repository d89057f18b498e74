import enum
import logging
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

import idna
from decorator import decorator
from rapidfuzz.distance import DamerauLevenshtein

from punycode import ACE_PREFIX, InvalidPunycode, decode_host, decode_punycode
from url_model import (
    DomainSplit,
    HostKind,
    HostKindTag,
    NoSuffixMatch,
    ParsedUrl,
    PhishCensusError,
    PublicSuffixSnapshot,
    classify_host,
    extra_hostname_length,
    split_domain,
)

__all__ = [
    "TypeTag", "Detection", "UrlClassification", "DetectorConfig", "Type2Mode",
    "detect_type1", "detect_type2", "detect_type3", "detect_type4",
    "detect_type5", "detect_type6", "decode_punycode", "InvalidPunycode",
    "classify", "load_brand_list", "drain_failures",
]

logger = logging.getLogger(__name__)

NO_TARGET = "other"

# Leet substitutions undone before brand comparison
LEET_TABLE = str.maketrans({"0": "o", "1": "l", "3": "e", "5": "s", "9": "g", "@": "a"})

# Candidate dotted tokens inside path/params/query
_EMBEDDED_DOMAIN_RE = re.compile(r"[A-Za-z0-9](?:[A-Za-z0-9-]*[A-Za-z0-9])?(?:\.[A-Za-z0-9](?:[A-Za-z0-9-]*[A-Za-z0-9])?)+")
_ALNUM_RUN_RE = re.compile(r"[a-z0-9]+")


class TypeTag(enum.Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"
    V = "V"
    VI = "VI"

    @property
    def order(self) -> int:
        return list(TypeTag).index(self)


# score_inputs keys each detector may emit
SCORE_KEYS = MappingProxyType({
    TypeTag.I: frozenset(),
    TypeTag.II: frozenset({"metadata_mode", "heuristic_mode"}),
    TypeTag.III: frozenset({"extra_length"}),
    TypeTag.IV: frozenset({"edit_distance"}),
    TypeTag.V: frozenset(),
    TypeTag.VI: frozenset({"idn_labels"}),
})


class Type2Mode(enum.Enum):
    METADATA = "metadata"
    HEURISTIC = "heuristic"
    BOTH = "both"


@dataclass(frozen=True)
class Detection:
    """One obfuscation technique found in a URL, with its evidence"""

    type_tag: TypeTag
    evidence: str
    score_inputs: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))

    def __post_init__(self):
        if not self.evidence:
            raise ValueError(f"Type {self.type_tag.value} detection without evidence")
        if not isinstance(self.score_inputs, MappingProxyType):
            object.__setattr__(self, "score_inputs", MappingProxyType(dict(self.score_inputs)))
        unknown = set(self.score_inputs) - SCORE_KEYS[self.type_tag]
        if unknown:
            raise ValueError(f"Type {self.type_tag.value}: unexpected score inputs {sorted(unknown)}")

    def __hash__(self):
        return hash((self.type_tag, self.evidence, tuple(sorted(self.score_inputs.items()))))

    def __eq__(self, other):
        if not isinstance(other, Detection):
            return NotImplemented
        return (self.type_tag, self.evidence, dict(self.score_inputs)) == \
            (other.type_tag, other.evidence, dict(other.score_inputs))

    def to_dict(self) -> dict:
        return {"type": self.type_tag.value, "evidence": self.evidence, "score_inputs": dict(self.score_inputs)}


@dataclass(frozen=True)
class UrlClassification:
    url: ParsedUrl
    detections: frozenset = frozenset()
    host_kind: HostKind | None = None
    # None when the host is an IP address (no registrable domain)
    extra_length: int | None = None

    def __post_init__(self):
        tags = [d.type_tag for d in self.detections]
        if len(tags) != len(set(tags)):
            raise ValueError("at most one detection per type")

    @property
    def types(self) -> set[TypeTag]:
        return {d.type_tag for d in self.detections}

    def get(self, tag: TypeTag) -> Detection | None:
        for d in self.detections:
            if d.type_tag is tag:
                return d
        return None

    def ordered(self) -> list[Detection]:
        return sorted(self.detections, key=lambda d: d.type_tag.order)

    def to_dict(self) -> dict:
        return {"url": self.url.raw or self.url.unparse(), "detections": [d.to_dict() for d in self.ordered()]}


@dataclass(frozen=True)
class DetectorConfig:
    suffixes: PublicSuffixSnapshot
    brand_list: tuple[str, ...] = ()
    type3_length_threshold: int = 15
    type3_delimiters: frozenset = frozenset("-_=?%")
    type4_max_edit_distance: int = 2
    type2_mode: Type2Mode = Type2Mode.BOTH
    # Types left out of classify(); lets callers switch detectors off independently
    disabled: frozenset = frozenset()

    def __post_init__(self):
        if self.type3_length_threshold < 1:
            raise ValueError("type3_length_threshold must be >= 1")
        if self.type4_max_edit_distance < 0:
            raise ValueError("type4_max_edit_distance must be >= 0")
        for brand in self.brand_list:
            if not brand or not brand.isascii() or brand != brand.lower():
                raise ValueError(f"brand {brand!r} must be lowercase ASCII")
        object.__setattr__(self, "brand_list", tuple(self.brand_list))
        object.__setattr__(self, "type3_delimiters", frozenset(self.type3_delimiters))
        object.__setattr__(self, "disabled", frozenset(self.disabled))

    def digest_fields(self) -> dict:
        """Everything that changes detector output, in a JSON-friendly form"""
        return {
            "suffixes": str(self.suffixes.path),
            "brands": sorted(self.brand_list),
            "type3_length_threshold": self.type3_length_threshold,
            "type3_delimiters": "".join(sorted(self.type3_delimiters)),
            "type4_max_edit_distance": self.type4_max_edit_distance,
            "type2_mode": self.type2_mode.value,
            "disabled": sorted(t.value for t in self.disabled),
        }


def load_brand_list(path: str | Path) -> tuple[str, ...]:
    """One lowercase brand per line; '#' comments"""
    brands = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            brand = line.split("#", 1)[0].strip()
            if brand and brand not in brands:
                brands.append(brand)
    return tuple(brands)


_failures = Counter()
_failures_lock = threading.Lock()


def drain_failures() -> Counter:
    """Detector failures since the last drain, keyed by detector name"""
    with _failures_lock:
        snapshot = Counter(_failures)
        _failures.clear()
    return snapshot


@decorator
def _never_raises(func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except Exception as e:
        with _failures_lock:
            _failures[func.__name__] += 1
        url = args[0].raw if args and isinstance(args[0], ParsedUrl) else "?"
        logger.debug("%s failed on %r: %s", func.__name__, url, e)
        return None


def _split(u: ParsedUrl, suffixes: PublicSuffixSnapshot) -> DomainSplit:
    try:
        return split_domain(u.host, suffixes)
    except NoSuffixMatch:
        return DomainSplit(subdomain="", registrable=u.host, public_suffix="")


@_never_raises
def detect_type1(u: ParsedUrl) -> Detection | None:
    """Hostname written as an IPv4 address in any notation"""
    kind = classify_host(u.host)
    if kind.is_ipv4:
        return Detection(TypeTag.I, kind.normalized_ip)
    return None


def _brand_token(target: str) -> str | None:
    for run in _ALNUM_RUN_RE.findall(target.lower()):
        if len(run) >= 3:
            return run
    return None


def _own_registrable(u: ParsedUrl, suffixes: PublicSuffixSnapshot) -> str | None:
    if classify_host(u.host).is_ip:
        return None
    return _split(u, suffixes).registrable


def _metadata_type2(u: ParsedUrl, cfg: DetectorConfig, target_hint: str | None) -> str | None:
    if not target_hint or target_hint.strip().lower() == NO_TARGET:
        return None
    token = _brand_token(target_hint)
    if token is None:
        return None
    registrable = _own_registrable(u, cfg.suffixes) or u.host
    if token in registrable.lower():
        return None
    return target_hint.strip()


def _heuristic_type2(u: ParsedUrl, cfg: DetectorConfig) -> str | None:
    own = _own_registrable(u, cfg.suffixes)
    for text in (u.path, u.params, u.query):
        for match in _EMBEDDED_DOMAIN_RE.finditer(text):
            candidate = match.group(0).lower()
            try:
                split = split_domain(candidate, cfg.suffixes)
            except NoSuffixMatch:
                continue
            if split.registrable != own:
                return candidate
    return None


@_never_raises
def detect_type2(u: ParsedUrl, cfg: DetectorConfig, target_hint: str | None = None) -> Detection | None:
    """Another organisation's domain (or name) used outside the host"""
    by_metadata = by_heuristic = None
    if cfg.type2_mode in (Type2Mode.METADATA, Type2Mode.BOTH):
        by_metadata = _metadata_type2(u, cfg, target_hint)
    if cfg.type2_mode in (Type2Mode.HEURISTIC, Type2Mode.BOTH):
        by_heuristic = _heuristic_type2(u, cfg)
    if by_metadata is None and by_heuristic is None:
        return None
    # Embedded domain is the sharper evidence when both modes fire
    evidence = by_heuristic if by_heuristic is not None else by_metadata
    return Detection(TypeTag.II, evidence, {
        "metadata_mode": int(by_metadata is not None),
        "heuristic_mode": int(by_heuristic is not None),
    })


def _has_word_delimiter(subdomain: str, delimiters: frozenset) -> bool:
    for i in range(1, len(subdomain) - 1):
        if subdomain[i] in delimiters and subdomain[i - 1].isalnum() and subdomain[i + 1].isalnum():
            return True
    return False


@_never_raises
def detect_type3(u: ParsedUrl, cfg: DetectorConfig) -> Detection | None:
    """Long run of words placed in front of the registered domain"""
    if classify_host(u.host).is_ip:
        return None
    split = _split(u, cfg.suffixes)
    extra = extra_hostname_length(split)
    if extra < cfg.type3_length_threshold:
        return None
    if not _has_word_delimiter(split.subdomain, cfg.type3_delimiters):
        return None
    return Detection(TypeTag.III, split.subdomain, {"extra_length": extra})


@_never_raises
def detect_type4(u: ParsedUrl, cfg: DetectorConfig) -> Detection | None:
    """Misspelt or leet-spelt brand as the registered name"""
    if classify_host(u.host).kind is not HostKindTag.REGISTERED_NAME or not cfg.brand_list:
        return None
    label = _split(u, cfg.suffixes).first_label.lower()
    candidates = [label] + [t for t in re.split(r"[-_]+", label) if t != label]

    best = None
    for candidate in candidates:
        if len(candidate) < 4:
            continue
        normalized = candidate.translate(LEET_TABLE)
        for brand in cfg.brand_list:
            if candidate == brand:
                continue
            distance = DamerauLevenshtein.distance(normalized, brand, score_cutoff=cfg.type4_max_edit_distance)
            if distance > cfg.type4_max_edit_distance:
                continue
            if best is None or (distance, brand) < (best[0], best[1]):
                best = (distance, brand)
    if best is None:
        return None
    return Detection(TypeTag.IV, best[1], {"edit_distance": best[0]})


@_never_raises
def detect_type5(u: ParsedUrl) -> Detection | None:
    """HTTPS scheme used to borrow the padlock's credibility"""
    if u.scheme.lower() == "https":
        return Detection(TypeTag.V, "https")
    return None


@_never_raises
def detect_type6(u: ParsedUrl) -> Detection | None:
    """Internationalized host, in ACE (xn--) or raw Unicode form"""
    labels = u.host.split(".")
    ace_labels = [label for label in labels if label[:len(ACE_PREFIX)].lower() == ACE_PREFIX]
    if ace_labels:
        decoded = decode_host(u.host)
        evidence = decoded if decoded != u.host else u.host
        return Detection(TypeTag.VI, evidence, {"idn_labels": len(ace_labels)})
    if not u.host.isascii():
        try:
            ace = idna.encode(u.host, uts46=True).decode("ascii")
            evidence = f"{u.host} ({ace})"
        except idna.IDNAError:
            evidence = u.host
        unicode_labels = sum(1 for label in labels if not label.isascii())
        return Detection(TypeTag.VI, evidence, {"idn_labels": unicode_labels})
    return None


def classify(u: ParsedUrl, cfg: DetectorConfig, target_hint: str | None = None) -> UrlClassification:
    """Run every enabled detector; the result is the union of their findings"""
    runs = {
        TypeTag.I: lambda: detect_type1(u),
        TypeTag.II: lambda: detect_type2(u, cfg, target_hint),
        TypeTag.III: lambda: detect_type3(u, cfg),
        TypeTag.IV: lambda: detect_type4(u, cfg),
        TypeTag.V: lambda: detect_type5(u),
        TypeTag.VI: lambda: detect_type6(u),
    }
    detections = set()
    for tag, run in runs.items():
        if tag in cfg.disabled:
            continue
        found = run()
        if found is not None:
            detections.add(found)

    host_kind = classify_host(u.host)
    extra_length = None
    if not host_kind.is_ip:
        try:
            extra_length = extra_hostname_length(_split(u, cfg.suffixes))
        except PhishCensusError as e:
            logger.debug("no length for %r: %s", u.raw, e)
    return UrlClassification(url=u, detections=frozenset(detections), host_kind=host_kind, extra_length=extra_length)
