"""N-Triples reading/writing, datatype-to-modality resolution and label splits.

Raw triples are plain tuples ``(subject, predicate, object)``. Subjects and
predicates are strings (IRIs without angle brackets, blank nodes as
``_:label``); objects are either such strings or :class:`TypedLiteral`.
"""

import enum
import io
from dataclasses import dataclass, field

XSD = "http://www.w3.org/2001/XMLSchema#"
RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
GEO = "http://www.opengis.net/ont/geosparql#"

XSD_STRING = XSD + "string"
RDF_LANGSTRING = RDF + "langString"
WKT_LITERAL = GEO + "wktLiteral"


class Modality(enum.Enum):
    NUMERICAL = "numerical"
    BOOLEAN = "boolean"
    TEMPORAL = "temporal"
    TEXTUAL = "textual"
    VISUAL = "visual"
    SPATIAL = "spatial"
    UNSUPPORTED = "unsupported"


_NUMERIC = (
    "double float decimal integer long int short byte nonNegativeInteger positiveInteger "
    "negativeInteger nonPositiveInteger unsignedLong unsignedInt unsignedShort unsignedByte"
).split()
_TEMPORAL = "dateTime date time gYear gYearMonth gMonth gMonthDay gDay".split()
_TEXTUAL = "string normalizedString token language Name NCName anyURI".split()

MODALITY_TABLE = {XSD + name: Modality.NUMERICAL for name in _NUMERIC}
MODALITY_TABLE.update({XSD + name: Modality.TEMPORAL for name in _TEMPORAL})
MODALITY_TABLE.update({XSD + name: Modality.TEXTUAL for name in _TEXTUAL})
MODALITY_TABLE.update({
    XSD + "boolean": Modality.BOOLEAN,
    XSD + "base64Binary": Modality.VISUAL,
    XSD + "b64string": Modality.VISUAL,
    WKT_LITERAL: Modality.SPATIAL,
    RDF_LANGSTRING: Modality.TEXTUAL,
    RDF + "PlainLiteral": Modality.TEXTUAL,
})


def resolve_modality(datatype):
    """Map a datatype IRI to its :class:`Modality`; unknown IRIs are UNSUPPORTED."""
    return MODALITY_TABLE.get(datatype, Modality.UNSUPPORTED)


@dataclass(frozen=True)
class TypedLiteral:
    lexical: str
    datatype: str = XSD_STRING
    language: str = None

    @property
    def modality(self):
        return resolve_modality(self.datatype)

    @property
    def key(self):
        """Identity used when merging literals: language tags count as datatype."""
        return (self.lexical, self.datatype, self.language)


class NTriplesError(ValueError):
    def __init__(self, message, line_number=None, line=None):
        self.line_number = line_number
        self.line = line
        where = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{where}{message}")


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

_ESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


class _Scanner:
    __slots__ = ("s", "i", "n")

    def __init__(self, text):
        self.s, self.i, self.n = text, 0, len(text)

    def skip_ws(self):
        s, i, n = self.s, self.i, self.n
        while i < n and s[i] in " \t":
            i += 1
        self.i = i

    def error(self, message):
        raise NTriplesError(f"{message} at column {self.i + 1}")

    def _unicode(self, width):
        digits = self.s[self.i:self.i + width]
        if len(digits) != width or any(ch not in "0123456789abcdefABCDEF" for ch in digits):
            self.error("bad unicode escape")
        self.i += width
        code = int(digits, 16)
        if code > 0x10FFFF:
            self.error("unicode escape out of range")
        return chr(code)

    def iri(self):
        # at '<'
        self.i += 1
        out = []
        s, n = self.s, self.n
        while True:
            if self.i >= n:
                self.error("unterminated IRI")
            ch = s[self.i]
            if ch == ">":
                self.i += 1
                return "".join(out)
            if ch == "\\":
                kind = s[self.i + 1:self.i + 2]
                self.i += 2
                if kind == "u":
                    out.append(self._unicode(4))
                elif kind == "U":
                    out.append(self._unicode(8))
                else:
                    self.error("bad escape in IRI")
                continue
            if ch in ' <"{}|^`' or ord(ch) <= 0x20:
                self.error(f"illegal character {ch!r} in IRI")
            out.append(ch)
            self.i += 1

    def bnode(self):
        # at '_'
        if self.s[self.i:self.i + 2] != "_:":
            self.error("expected blank node")
        start = self.i
        self.i += 2
        s, n = self.s, self.n
        while self.i < n and (s[self.i].isalnum() or s[self.i] in "_-.:"):
            self.i += 1
        # a trailing '.' belongs to the statement terminator
        while self.s[self.i - 1] == "." and self.i - 1 > start + 1:
            self.i -= 1
        if self.i == start + 2:
            self.error("empty blank node label")
        return self.s[start:self.i]

    def string(self):
        # at '"'
        self.i += 1
        out = []
        s, n = self.s, self.n
        while True:
            if self.i >= n:
                self.error("unterminated string literal")
            ch = s[self.i]
            if ch == '"':
                self.i += 1
                return "".join(out)
            if ch == "\\":
                kind = s[self.i + 1:self.i + 2]
                self.i += 2
                if kind in _ESCAPES:
                    out.append(_ESCAPES[kind])
                elif kind == "u":
                    out.append(self._unicode(4))
                elif kind == "U":
                    out.append(self._unicode(8))
                else:
                    self.error(f"bad string escape \\{kind}")
                continue
            if ch in "\n\r":
                self.error("raw newline in string literal")
            out.append(ch)
            self.i += 1

    def term(self, position):
        self.skip_ws()
        if self.i >= self.n:
            self.error(f"missing {position}")
        ch = self.s[self.i]
        if ch == "<":
            return self.iri()
        if ch == "_":
            if position == "predicate":
                self.error("blank node not allowed as predicate")
            return self.bnode()
        if ch == '"' and position == "object":
            lexical = self.string()
            if self.s.startswith("^^", self.i):
                self.i += 2
                if self.s[self.i:self.i + 1] != "<":
                    self.error("expected datatype IRI")
                return TypedLiteral(lexical, self.iri())
            if self.s.startswith("@", self.i):
                start = self.i + 1
                self.i = start
                while self.i < self.n and (self.s[self.i].isalnum() or self.s[self.i] == "-"):
                    self.i += 1
                tag = self.s[start:self.i]
                if not tag or not tag[0].isalpha():
                    self.error("bad language tag")
                return TypedLiteral(lexical, RDF_LANGSTRING, tag.lower())
            return TypedLiteral(lexical, XSD_STRING)
        self.error(f"unexpected {ch!r} where {position} expected")


def parse_line(line):
    """Parse one N-Triples line; returns a triple or ``None`` for blank/comment lines."""
    sc = _Scanner(line.rstrip("\r\n"))
    sc.skip_ws()
    if sc.i >= sc.n or sc.s[sc.i] == "#":
        return None
    s = sc.term("subject")
    p = sc.term("predicate")
    o = sc.term("object")
    sc.skip_ws()
    if sc.s[sc.i:sc.i + 1] != ".":
        sc.error("expected '.'")
    sc.i += 1
    sc.skip_ws()
    if sc.i < sc.n and sc.s[sc.i] != "#":
        sc.error("trailing content after '.'")
    return (s, p, o)


def iter_ntriples(lines):
    """Yield triples from an iterable of text or byte lines (UTF-8)."""
    for number, line in enumerate(lines, start=1):
        if isinstance(line, bytes):
            try:
                line = line.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise NTriplesError(f"invalid UTF-8 ({exc.reason})", number) from None
        try:
            triple = parse_line(line)
        except NTriplesError as exc:
            raise NTriplesError(str(exc), number, line) from None
        if triple is not None:
            yield triple


def parse_ntriples(stream):
    """Parse a whole N-Triples document given as ``bytes``, ``str`` or a file object."""
    if isinstance(stream, bytes):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    return list(iter_ntriples(stream))


def read_ntriples(path):
    with open(path, "rb") as fh:
        return list(iter_ntriples(fh))


# --------------------------------------------------------------------------
# serialisation
# --------------------------------------------------------------------------


def _escape_string(text):
    out = []
    for ch in text:
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\t":
            out.append("\\t")
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


def _escape_iri(iri):
    out = []
    for ch in iri:
        if ch in ' <>"{}|^`\\' or ord(ch) <= 0x20:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


def format_term(term):
    if isinstance(term, TypedLiteral):
        body = f'"{_escape_string(term.lexical)}"'
        if term.language is not None:
            return f"{body}@{term.language}"
        if term.datatype == XSD_STRING:
            return body
        return f"{body}^^<{_escape_iri(term.datatype)}>"
    if term.startswith("_:"):
        return term
    return f"<{_escape_iri(term)}>"


def format_triple(triple):
    s, p, o = triple
    return f"{format_term(s)} {format_term(p)} {format_term(o)} .\n"


def serialize_ntriples(triples):
    return "".join(format_triple(t) for t in triples)


def write_ntriples(path, triples):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in triples:
            fh.write(format_triple(t))


# --------------------------------------------------------------------------
# label splits
# --------------------------------------------------------------------------

PARTITIONS = ("train", "valid", "test")


class SplitError(ValueError):
    pass


@dataclass
class LabeledSplit:
    train: list = field(default_factory=list)
    valid: list = field(default_factory=list)
    test: list = field(default_factory=list)
    classes: tuple = ()

    @property
    def num_classes(self):
        return len(self.classes)

    def class_index(self, label):
        return self.classes.index(label)

    def partition(self, name):
        if name not in PARTITIONS:
            raise SplitError(f"unknown partition {name!r}")
        return getattr(self, name)

    def indices(self, graph, name):
        """Node ids and class indices of one partition, in file order."""
        lookup = {label: i for i, label in enumerate(self.classes)}
        rows = self.partition(name)
        nodes = [graph.entity_id(iri) for iri, _ in rows]
        labels = [lookup[label] for _, label in rows]
        return nodes, labels


def parse_split(lines, graph=None, source="<split>"):
    parts = {name: [] for name in PARTITIONS}
    seen = {}
    for number, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise SplitError(f"{source}:{number}: expected 3 tab-separated columns, got {len(cols)}")
        iri, label, part = cols
        if part not in parts:
            raise SplitError(f"{source}:{number}: unknown partition {part!r}")
        if iri in seen:
            raise SplitError(f"{source}:{number}: entity {iri} already listed in partition {seen[iri]!r}")
        if graph is not None and not graph.has_entity(iri):
            raise SplitError(f"{source}:{number}: entity {iri} not found in graph")
        seen[iri] = part
        parts[part].append((iri, label))
    if not parts["train"]:
        raise SplitError(f"{source}: train partition is empty")
    if not parts["test"]:
        raise SplitError(f"{source}: test partition is empty")
    classes = tuple(sorted({label for rows in parts.values() for _, label in rows}))
    return LabeledSplit(parts["train"], parts["valid"], parts["test"], classes)


def load_split(path, graph=None):
    """Read a ``iri<TAB>label<TAB>partition`` file (no header)."""
    with open(path, encoding="utf-8") as fh:
        return parse_split(fh, graph, source=str(path))


def write_split(path, split):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name in PARTITIONS:
            for iri, label in split.partition(name):
                fh.write(f"{iri}\t{label}\t{name}\n")
