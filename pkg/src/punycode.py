"""RFC 3492 Punycode decoding for single IDN labels."""

from url_model import PhishCensusError

ACE_PREFIX = "xn--"

BASE = 36
TMIN = 1
TMAX = 26
SKEW = 38
DAMP = 700
INITIAL_BIAS = 72
INITIAL_N = 0x80
DELIMITER = "-"

# Decoder arithmetic is bounded the way a 32-bit implementation would be
MAXINT = 2 ** 31 - 1
MAX_CODE_POINT = 0x10FFFF


class InvalidPunycode(PhishCensusError):
    """Label is not a valid Punycode encoding"""

    def __init__(self, reason: str, position: int):
        super().__init__(f"{reason} (position {position})")
        self.reason = reason
        self.position = position


def _digit_value(ch: str) -> int | None:
    code = ord(ch)
    if 0x30 <= code <= 0x39:
        return code - 22  # '0'..'9' -> 26..35
    if 0x41 <= code <= 0x5A:
        return code - 0x41
    if 0x61 <= code <= 0x7A:
        return code - 0x61
    return None


def _adapt(delta: int, num_points: int, first_time: bool) -> int:
    delta = delta // DAMP if first_time else delta // 2
    delta += delta // num_points
    k = 0
    while delta > ((BASE - TMIN) * TMAX) // 2:
        delta //= BASE - TMIN
        k += BASE
    return k + (((BASE - TMIN + 1) * delta) // (delta + SKEW))


def decode_punycode(label: str) -> str:
    """Decode an ``xn--`` label to Unicode.

    Basic code points keep their case; digits are case-insensitive.
    """
    if not label[:len(ACE_PREFIX)].lower() == ACE_PREFIX:
        raise InvalidPunycode("missing xn-- prefix", 0)
    encoded = label[len(ACE_PREFIX):]
    offset = len(ACE_PREFIX)

    delim = encoded.rfind(DELIMITER)
    if delim >= 0:
        basic = encoded[:delim]
        pos = delim + 1
    else:
        basic = ""
        pos = 0
    for i, ch in enumerate(basic):
        if ord(ch) >= 0x80:
            raise InvalidPunycode("non-basic code point before delimiter", offset + i)
    output = list(basic)

    n = INITIAL_N
    i = 0
    bias = INITIAL_BIAS
    while pos < len(encoded):
        old_i = i
        w = 1
        k = BASE
        while True:
            if pos >= len(encoded):
                raise InvalidPunycode("truncated variable-length integer", offset + pos)
            digit = _digit_value(encoded[pos])
            if digit is None:
                raise InvalidPunycode(f"invalid digit {encoded[pos]!r}", offset + pos)
            pos += 1
            if digit > (MAXINT - i) // w:
                raise InvalidPunycode("overflow", offset + pos - 1)
            i += digit * w
            t = TMIN if k <= bias else TMAX if k >= bias + TMAX else k - bias
            if digit < t:
                break
            if w > MAXINT // (BASE - t):
                raise InvalidPunycode("overflow", offset + pos - 1)
            w *= BASE - t
            k += BASE

        length = len(output) + 1
        bias = _adapt(i - old_i, length, old_i == 0)
        if i // length > MAXINT - n:
            raise InvalidPunycode("overflow", offset + pos - 1)
        n += i // length
        i %= length
        if n > MAX_CODE_POINT:
            raise InvalidPunycode("code point out of range", offset + pos - 1)
        output.insert(i, chr(n))
        i += 1

    return "".join(output)


def decode_host(host: str) -> str:
    """Decode every xn-- label of a host, leaving undecodable labels as they are"""
    labels = []
    for label in host.split("."):
        if label[:len(ACE_PREFIX)].lower() == ACE_PREFIX:
            try:
                label = decode_punycode(label)
            except InvalidPunycode:
                pass
        labels.append(label)
    return ".".join(labels)
