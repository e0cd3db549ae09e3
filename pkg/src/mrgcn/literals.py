"""Lexical form -> value payload conversion for every supported modality.

All parsers are total: malformed input yields ``None`` (the missing marker),
never an exception.
"""

import base64
import binascii
import io
import math
import re
from dataclasses import dataclass

import numpy as np

from .rdf import XSD

IMAGE_SIZE = 64

# --------------------------------------------------------------------------
# numbers and booleans
# --------------------------------------------------------------------------

_NUMBER_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def parse_number(lexical):
    """Return a finite float, or ``None`` for unparseable/non-finite input."""
    text = lexical.strip()
    if not _NUMBER_RE.match(text):
        return None
    value = float(text)
    return value if math.isfinite(value) else None


def parse_boolean(lexical):
    text = lexical.strip()
    if text in ("true", "1"):
        return 1.0
    if text in ("false", "0"):
        return -1.0
    return None


# --------------------------------------------------------------------------
# dates and times
# --------------------------------------------------------------------------

MAX_YEAR = 9999


@dataclass(frozen=True)
class DateValue:
    """Decomposed temporal value; absent components are ``None``.

    The year is stored as era sign plus its three fragments, so
    ``-0044`` becomes ``era=-1.0, century=0, decade=4, year=4``.
    """

    era: float = None
    century: int = None
    decade: int = None
    year: int = None
    month: int = None
    day: int = None
    hour: int = None

    @property
    def full_year(self):
        if self.century is None:
            return None
        return int(self.era) * (self.century * 100 + self.decade * 10 + self.year)


_TZ = r"(?:Z|[+-]\d{2}:\d{2})?"
_YEAR = r"([+-]?)(\d{4,})"
_CLOCK = r"(\d{2}):(\d{2}):(\d{2}(?:\.\d+)?)"

_DATE_PATTERNS = {
    "dateTime": re.compile(rf"^{_YEAR}-(\d{{2}})-(\d{{2}})T{_CLOCK}{_TZ}$"),
    "date": re.compile(rf"^{_YEAR}-(\d{{2}})-(\d{{2}}){_TZ}$"),
    "time": re.compile(rf"^{_CLOCK}{_TZ}$"),
    "gYear": re.compile(rf"^{_YEAR}{_TZ}$"),
    "gYearMonth": re.compile(rf"^{_YEAR}-(\d{{2}}){_TZ}$"),
    "gMonth": re.compile(rf"^--(\d{{2}})(?:--)?{_TZ}$"),
    "gMonthDay": re.compile(rf"^--(\d{{2}})-(\d{{2}}){_TZ}$"),
    "gDay": re.compile(rf"^---(\d{{2}}){_TZ}$"),
}

_MONTH_DAYS = (31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)


def _days_in_month(month, signed_year):
    if month == 2 and signed_year is not None:
        leap = signed_year % 4 == 0 and (signed_year % 100 != 0 or signed_year % 400 == 0)
        return 29 if leap else 28
    return _MONTH_DAYS[month - 1]


def _year_parts(sign, digits):
    value = int(digits)
    if value > MAX_YEAR:
        return None
    era = -1.0 if sign == "-" else 1.0
    return {"era": era, "century": value // 100, "decade": (value // 10) % 10, "year": value % 10}


def _clock_hour(h, m, s):
    hour, minute, second = int(h), int(m), float(s)
    if hour > 23 or minute > 59 or second >= 60:
        return None
    return hour


def parse_datetime(lexical, datatype):
    """Decompose an XSD temporal lexical form; timezones are ignored."""
    kind = datatype[len(XSD):] if datatype.startswith(XSD) else None
    pattern = _DATE_PATTERNS.get(kind)
    if pattern is None:
        return None
    m = pattern.match(lexical.strip())
    if m is None:
        return None
    g = m.groups()
    parts = {}
    if kind in ("dateTime", "date", "gYear", "gYearMonth"):
        year = _year_parts(g[0], g[1])
        if year is None:
            return None
        parts.update(year)
        rest = g[2:]
    else:
        rest = g
    if kind in ("dateTime", "date", "gYearMonth", "gMonth", "gMonthDay"):
        parts["month"] = int(rest[0])
        if not 1 <= parts["month"] <= 12:
            return None
    if kind in ("dateTime", "date", "gMonthDay"):
        parts["day"] = int(rest[1])
    elif kind == "gDay":
        parts["day"] = int(rest[0])
    if "day" in parts:
        signed = None
        if "century" in parts:
            signed = int(parts["era"]) * (parts["century"] * 100 + parts["decade"] * 10 + parts["year"])
        limit = _days_in_month(parts["month"], signed) if "month" in parts else 31
        if not 1 <= parts["day"] <= limit:
            return None
    if kind in ("dateTime", "time"):
        clock = rest[2:5] if kind == "dateTime" else rest[0:3]
        hour = _clock_hour(*clock)
        if hour is None:
            return None
        parts["hour"] = hour
    return DateValue(**parts)


def format_datetime(value, datatype):
    """Inverse of :func:`parse_datetime` for the components the type carries."""
    kind = datatype[len(XSD):]
    year = ""
    if value.century is not None:
        sign = "-" if value.era < 0 else ""
        year = f"{sign}{value.century * 100 + value.decade * 10 + value.year:04d}"
    if kind == "gYear":
        return year
    if kind == "gYearMonth":
        return f"{year}-{value.month:02d}"
    if kind == "date":
        return f"{year}-{value.month:02d}-{value.day:02d}"
    if kind == "dateTime":
        return f"{year}-{value.month:02d}-{value.day:02d}T{value.hour:02d}:00:00"
    if kind == "time":
        return f"{value.hour:02d}:00:00"
    if kind == "gMonth":
        return f"--{value.month:02d}"
    if kind == "gMonthDay":
        return f"--{value.month:02d}-{value.day:02d}"
    if kind == "gDay":
        return f"---{value.day:02d}"
    raise ValueError(f"not a temporal datatype: {datatype}")


# --------------------------------------------------------------------------
# images
# --------------------------------------------------------------------------


def decode_image(b64text, size=IMAGE_SIZE):
    """base64 PNG -> ``(3, size, size)`` float array in [0, 1], or ``None``."""
    from PIL import Image

    try:
        raw = base64.b64decode("".join(b64text.split()), validate=True)
        with Image.open(io.BytesIO(raw)) as img:
            if img.format != "PNG":
                return None
            rgb = img.convert("RGB").resize((size, size), Image.BILINEAR)
            arr = np.asarray(rgb, dtype=np.float64) / 255.0
    except (binascii.Error, ValueError, OSError, SyntaxError, Image.DecompressionBombError):
        return None
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def encode_png(raster):
    """``(3, h, w)`` array in [0, 1] -> base64 PNG text."""
    from PIL import Image

    arr = np.clip(np.round(np.asarray(raster).transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG", optimize=False)
    return base64.b64encode(buf.getvalue()).decode("ascii")


# --------------------------------------------------------------------------
# WKT geometries
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Geometry:
    """Flattened coordinates plus a flag marking the last point of each ring/part."""

    kind: str
    coordinates: np.ndarray
    part_end: np.ndarray

    @property
    def d(self):
        return self.coordinates.shape[1]

    def __len__(self):
        return self.coordinates.shape[0]


_WKT_TOKEN = re.compile(r"\s*(?:([A-Za-z]+)|([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|([(),]))")
_CRS_PREFIX = re.compile(r"^\s*<[^>]*>\s*")


class _WktError(Exception):
    pass


def _wkt_tokens(text):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _WKT_TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise _WktError(f"bad token at {pos}")
        word, number, punct = m.groups()
        if word is not None:
            out.append(("word", word.upper()))
        elif number is not None:
            out.append(("num", float(number)))
        else:
            out.append(("p", punct))
        pos = m.end()
    return out


class _WktParser:
    def __init__(self, tokens):
        self.t, self.i = tokens, 0

    def expect(self, punct):
        if self.i >= len(self.t) or self.t[self.i] != ("p", punct):
            raise _WktError(f"expected {punct!r}")
        self.i += 1

    def peek(self, punct):
        return self.i < len(self.t) and self.t[self.i] == ("p", punct)

    def point(self):
        coords = []
        while self.i < len(self.t) and self.t[self.i][0] == "num":
            coords.append(self.t[self.i][1])
            self.i += 1
        if len(coords) != 2:
            raise _WktError("only 2-D coordinates are supported")
        return coords

    def point_list(self):
        self.expect("(")
        pts = [self.point()]
        while self.peek(","):
            self.i += 1
            pts.append(self.point())
        self.expect(")")
        return pts

    def ring(self):
        pts = self.point_list()
        if len(pts) < 4 or pts[0] != pts[-1]:
            raise _WktError("polygon ring must be closed with at least 4 points")
        return pts

    def polygon(self):
        self.expect("(")
        rings = [self.ring()]
        while self.peek(","):
            self.i += 1
            rings.append(self.ring())
        self.expect(")")
        return rings


def parse_wkt(lexical):
    """Parse POINT, LINESTRING, POLYGON or MULTIPOLYGON (2-D); ``None`` if malformed."""
    try:
        tokens = _wkt_tokens(_CRS_PREFIX.sub("", lexical, count=1))
        if not tokens or tokens[0][0] != "word":
            return None
        kind = tokens[0][1]
        p = _WktParser(tokens)
        p.i = 1
        if kind == "POINT":
            p.expect("(")
            parts = [[p.point()]]
            p.expect(")")
            name = "Point"
        elif kind == "LINESTRING":
            parts = [p.point_list()]
            if len(parts[0]) < 2:
                return None
            name = "LineString"
        elif kind == "POLYGON":
            parts = p.polygon()
            name = "Polygon"
        elif kind == "MULTIPOLYGON":
            p.expect("(")
            parts = list(p.polygon())
            while p.peek(","):
                p.i += 1
                parts.extend(p.polygon())
            p.expect(")")
            name = "MultiPolygon"
        else:
            return None
        if p.i != len(tokens):
            return None
    except _WktError:
        return None
    coords = np.array([pt for part in parts for pt in part], dtype=np.float64)
    if not np.all(np.isfinite(coords)):
        return None
    ends = np.zeros(len(coords), dtype=bool)
    ends[np.cumsum([len(part) for part in parts]) - 1] = True
    return Geometry(name, coords, ends)
