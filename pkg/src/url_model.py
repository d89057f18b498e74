import enum
import ipaddress
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import tldextract

logger = logging.getLogger(__name__)

SCHEME_RE = re.compile(r"[A-Za-z][A-Za-z0-9+.\-]*")

# Characters that may never appear inside an authority (RFC 3986 excludes them everywhere)
_ILLEGAL_AUTHORITY = frozenset(' \t\r\n\x0b\x0c<>"{}|\\^`')

_MAX_IPV4 = 2 ** 32 - 1

# Trailing components in recombination order
COMPONENTS = ("scheme", "netloc", "path", "params", "query", "fragment")

# Full Public Suffix List shipped inside the tldextract wheel, pinned by the installed version
BUNDLED_SUFFIX_SNAPSHOT = Path(tldextract.__file__).with_name(".tld_set_snapshot")


class PhishCensusError(Exception):
    """Base class for every error raised by this package"""


class UrlParseError(PhishCensusError):
    """A raw URL could not be split into components"""

    kind = "UrlParseError"

    def __init__(self, message: str, offset: int):
        super().__init__(f"{self.kind} at byte {offset}: {message}")
        self.offset = offset


class MissingScheme(UrlParseError):
    kind = "MissingScheme"


class EmptyHost(UrlParseError):
    kind = "EmptyHost"


class IllegalCharacterInAuthority(UrlParseError):
    kind = "IllegalCharacterInAuthority"


class NoSuffixMatch(PhishCensusError):
    """Host has no label under a known public suffix"""


def _byte_offset(raw: str, index: int) -> int:
    return len(raw[:index].encode("utf-8", "surrogatepass"))


@dataclass(frozen=True)
class ParsedUrl:
    """The six components of one URL, percent-encoding untouched"""

    scheme: str
    host: str
    port: int | None = None
    userinfo: str | None = None
    path: str = ""
    params: str = ""
    query: str = ""
    fragment: str = ""
    raw: str = field(default="", compare=False)
    # Delimiters seen at parse time whose component was empty ('?', '#', ';', ':')
    empty_delimiters: frozenset = field(default=frozenset(), compare=False)

    @property
    def netloc(self) -> str:
        """Authority as the component table counts it (userinfo and port included)"""
        netloc = self.host
        if self.userinfo is not None:
            netloc = f"{self.userinfo}@{netloc}"
        if self.port is not None:
            netloc = f"{netloc}:{self.port}"
        return netloc

    def component(self, name: str) -> str:
        return getattr(self, name) if name != "netloc" else self.netloc

    def present_components(self) -> list[str]:
        """Components with a non-empty value (scheme and netloc always)"""
        return [name for name in COMPONENTS if self.component(name)]

    def unparse(self) -> str:
        out = [self.scheme, "://", self.netloc]
        if self.port is None and ":" in self.empty_delimiters:
            out.append(":")
        out.append(self.path)
        if self.params or ";" in self.empty_delimiters:
            out.append(";" + self.params)
        if self.query or "?" in self.empty_delimiters:
            out.append("?" + self.query)
        if self.fragment or "#" in self.empty_delimiters:
            out.append("#" + self.fragment)
        return "".join(out)


def _split_params(path: str) -> tuple[str, str]:
    # params belong to the last path segment only
    start = path.rfind("/") + 1
    i = path.find(";", start)
    if i < 0:
        return path, ""
    return path[:i], path[i + 1:]


def _ascii_lower(text: str) -> str:
    return "".join(ch.lower() if ch.isascii() else ch for ch in text)


def parse_url(raw: str | bytes) -> ParsedUrl:
    """Split a raw URL string into scheme, authority, path, params, query, fragment.

    Never decodes percent escapes. Raises a UrlParseError subclass carrying the
    byte offset of the problem.
    """
    if isinstance(raw, (bytes, bytearray)):
        raw = bytes(raw).decode("utf-8", errors="replace")

    colon = raw.find(":")
    if colon <= 0 or not SCHEME_RE.fullmatch(raw[:colon]):
        raise MissingScheme("no ':'-delimited scheme", 0 if colon < 0 else _byte_offset(raw, max(colon, 0)))
    scheme = raw[:colon].lower()

    rest_start = colon + 1
    if raw[rest_start:rest_start + 2] != "//":
        raise EmptyHost("no authority after scheme", _byte_offset(raw, rest_start))
    auth_start = rest_start + 2

    # Authority runs up to the first of '/', '?', '#'
    auth_end = len(raw)
    for delim in "/?#":
        i = raw.find(delim, auth_start)
        if 0 <= i < auth_end:
            auth_end = i
    authority = raw[auth_start:auth_end]

    for i, ch in enumerate(authority):
        if ch in _ILLEGAL_AUTHORITY or ord(ch) < 0x20 or ord(ch) == 0x7F:
            raise IllegalCharacterInAuthority(f"{ch!r} in authority", _byte_offset(raw, auth_start + i))

    empty_delimiters = set()
    userinfo = None
    host_start = 0
    at = authority.rfind("@")
    if at >= 0:
        userinfo = authority[:at]
        host_start = at + 1
    hostport = authority[host_start:]

    port_text = None
    if hostport.startswith("["):
        close = hostport.find("]")
        if close < 0:
            raise IllegalCharacterInAuthority("unterminated IPv6 literal",
                                              _byte_offset(raw, auth_start + host_start))
        host = hostport[:close + 1]
        tail = hostport[close + 1:]
        if tail:
            if not tail.startswith(":"):
                raise IllegalCharacterInAuthority("junk after IPv6 literal",
                                                  _byte_offset(raw, auth_start + host_start + close + 1))
            port_text = tail[1:]
    else:
        host, sep, port_text = hostport.rpartition(":")
        if not sep:
            host, port_text = hostport, None

    port = None
    if port_text is not None:
        port_offset = auth_start + host_start + len(host) + 1
        if port_text == "":
            empty_delimiters.add(":")
        elif not (port_text.isascii() and port_text.isdigit()):
            raise IllegalCharacterInAuthority("non-digit port", _byte_offset(raw, port_offset))
        else:
            port = int(port_text)

    if host.endswith("."):
        host = host[:-1]
    if not host:
        raise EmptyHost("empty host", _byte_offset(raw, auth_start + host_start))
    host = _ascii_lower(host)

    remainder = raw[auth_end:]
    fragment = ""
    if "#" in remainder:
        remainder, fragment = remainder.split("#", 1)
        if not fragment:
            empty_delimiters.add("#")
    query = ""
    if "?" in remainder:
        remainder, query = remainder.split("?", 1)
        if not query:
            empty_delimiters.add("?")
    path, params = _split_params(remainder)
    if not params and len(path) < len(remainder):
        empty_delimiters.add(";")

    return ParsedUrl(
        scheme=scheme, host=host, port=port, userinfo=userinfo,
        path=path, params=params, query=query, fragment=fragment,
        raw=raw, empty_delimiters=frozenset(empty_delimiters),
    )


class HostKindTag(enum.Enum):
    DOTTED_QUAD_IP = "DottedQuadIp"
    HEX_IP = "HexIp"
    DECIMAL_IP = "DecimalIp"
    OCTAL_OR_MIXED_IP = "OctalOrMixedIp"
    IPV6 = "Ipv6"
    PUNYCODE_IDN = "PunycodeIdn"
    UNICODE_IDN = "UnicodeIdn"
    REGISTERED_NAME = "RegisteredName"


IPV4_KINDS = frozenset({
    HostKindTag.DOTTED_QUAD_IP, HostKindTag.HEX_IP,
    HostKindTag.DECIMAL_IP, HostKindTag.OCTAL_OR_MIXED_IP,
})
IP_KINDS = IPV4_KINDS | {HostKindTag.IPV6}
IDN_KINDS = frozenset({HostKindTag.PUNYCODE_IDN, HostKindTag.UNICODE_IDN})


@dataclass(frozen=True)
class HostKind:
    kind: HostKindTag
    normalized_ip: str | None = None

    @property
    def is_ip(self) -> bool:
        return self.kind in IP_KINDS

    @property
    def is_ipv4(self) -> bool:
        return self.kind in IPV4_KINDS

    @property
    def is_idn(self) -> bool:
        return self.kind in IDN_KINDS


_HEX_PART = re.compile(r"0[xX][0-9a-fA-F]*")
_OCT_PART = re.compile(r"0[0-7]+")
_DEC_PART = re.compile(r"0|[1-9][0-9]*")


def _ipv4_part(text: str) -> tuple[int, str] | None:
    """Value and notation ('hex', 'oct', 'dec') of one inet_aton-style part"""
    if _HEX_PART.fullmatch(text):
        digits = text[2:]
        return (int(digits, 16) if digits else 0), "hex"
    if _OCT_PART.fullmatch(text):
        return int(text, 8), "oct"
    if _DEC_PART.fullmatch(text):
        return int(text), "dec"
    return None


def _parse_ipv4(host: str) -> tuple[int, HostKindTag] | None:
    parts = host.split(".")
    if not 1 <= len(parts) <= 4:
        return None
    parsed = [_ipv4_part(p) for p in parts]
    if any(p is None for p in parsed):
        return None

    values = [v for v, _ in parsed]
    notations = {n for _, n in parsed}
    # Leading parts are single bytes; the last part fills the remaining bytes
    if any(v > 255 for v in values[:-1]):
        return None
    remaining_bytes = 5 - len(values)
    if values[-1] >= 256 ** remaining_bytes:
        return None
    value = 0
    for v in values[:-1]:
        value = value * 256 + v
    value = value * 256 ** remaining_bytes + values[-1]

    if len(parts) == 4 and notations == {"dec"}:
        return value, HostKindTag.DOTTED_QUAD_IP
    if len(parts) == 1 and notations == {"hex"}:
        return value, HostKindTag.HEX_IP
    if len(parts) == 1 and notations == {"dec"}:
        # Short digit strings are names, not dword addresses
        if value < 256:
            return None
        return value, HostKindTag.DECIMAL_IP
    return value, HostKindTag.OCTAL_OR_MIXED_IP


def classify_host(host: str) -> HostKind:
    """Decide which of the host forms a (parsed) host uses"""
    if host.startswith("[") and host.endswith("]"):
        try:
            address = ipaddress.IPv6Address(host[1:-1].split("%", 1)[0])
            return HostKind(HostKindTag.IPV6, address.compressed)
        except ValueError:
            logger.debug("bracketed host %r is not a valid IPv6 literal", host)

    ipv4 = _parse_ipv4(host)
    if ipv4 is not None:
        value, kind = ipv4
        return HostKind(kind, str(ipaddress.IPv4Address(value)))

    if not host.isascii():
        return HostKind(HostKindTag.UNICODE_IDN)
    if any(label.lower().startswith("xn--") for label in host.split(".")):
        return HostKind(HostKindTag.PUNYCODE_IDN)
    return HostKind(HostKindTag.REGISTERED_NAME)


@dataclass(frozen=True)
class DomainSplit:
    subdomain: str
    registrable: str
    public_suffix: str

    @property
    def host(self) -> str:
        return f"{self.subdomain}.{self.registrable}" if self.subdomain else self.registrable

    @property
    def first_label(self) -> str:
        """Registrable label without its suffix (the name an attacker registers)"""
        if self.public_suffix and self.registrable.endswith("." + self.public_suffix):
            return self.registrable[:-len(self.public_suffix) - 1]
        return self.registrable.split(".", 1)[0]


class PublicSuffixSnapshot:
    """Immutable public-suffix list loaded from a pinned file (no network)"""

    def __init__(self, path: str | Path):
        self.path = Path(path).resolve()
        if not self.path.is_file():
            raise FileNotFoundError(f"suffix snapshot not found: {self.path}")
        self._extract = tldextract.TLDExtract(
            suffix_list_urls=(self.path.as_uri(),),
            cache_dir=None,
            fallback_to_snapshot=False,
            include_psl_private_domains=True,
        )
        # Force the load now so worker threads never race on the lazy init
        self._extract("example.invalid")
        logger.debug("[PSL] loaded suffix snapshot %s", self.path)

    @classmethod
    def bundled(cls) -> "PublicSuffixSnapshot":
        return cls(BUNDLED_SUFFIX_SNAPSHOT)

    def split(self, host: str) -> tuple[str, str, str]:
        result = self._extract(host)
        return result.subdomain, result.domain, result.suffix

    def __repr__(self):
        return f"PublicSuffixSnapshot({str(self.path)!r})"


def split_domain(host: str, suffixes: PublicSuffixSnapshot) -> DomainSplit:
    """Longest public-suffix match; registrable = one label + suffix"""
    host = _ascii_lower(host).rstrip(".")
    subdomain, domain, suffix = suffixes.split(host)
    if not suffix or not domain:
        raise NoSuffixMatch(f"no known public suffix in {host!r}")
    split = DomainSplit(subdomain=subdomain, registrable=f"{domain}.{suffix}", public_suffix=suffix)
    # tldextract also splits on ideographic and fullwidth dots
    if split.host != host:
        raise NoSuffixMatch(f"{host!r} does not split on ASCII dots")
    return split


def extra_hostname_length(split: DomainSplit) -> int:
    """Characters left of the registrable domain, trailing dot included"""
    return len(split.subdomain) + 1 if split.subdomain else 0
