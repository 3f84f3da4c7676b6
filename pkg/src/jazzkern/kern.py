"""Two-spine **kern lead sheets: a melody spine (``**kern``) and a chord spine (``**harte``)."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator

from . import harte

__all__ = [
    "LINEBREAK",
    "NULL",
    "CHORD_SPINE",
    "LineKind",
    "KernLine",
    "KernDocument",
    "MelodyToken",
    "Diagnostic",
    "KernError",
    "SpineCountError",
    "BadMelodyToken",
    "BadChordToken",
    "MissingTerminator",
    "MissingHeader",
    "InvalidDocument",
    "parse_kern",
    "read_kern",
    "serialize_kern",
    "split_regions",
    "strip_annotations",
    "validate_document",
    "parse_melody_token",
    "recip_duration",
    "measure_count",
]

LINEBREAK = "!!linebreak:original"
NULL = "."
MELODY_SPINE = "**kern"
CHORD_SPINE = "**harte"
LEGACY_CHORD_SPINES = ("**mxhm",)
TERMINATOR = "*-"
HEADER = f"{MELODY_SPINE}\t{CHORD_SPINE}"

_SPINE_MANIPULATORS = {"*^", "*v", "*+", "*x"}


class LineKind(str, Enum):
    EXCLUSIVE = "exclusive-interpretation"
    INTERPRETATION = "interpretation"
    BARLINE = "barline"
    DATA = "data"
    COMMENT = "comment"
    LINEBREAK = "linebreak-marker"


class KernError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SpineCountError(KernError):
    pass


class BadMelodyToken(KernError):
    pass


class BadChordToken(KernError):
    pass


class MissingTerminator(KernError):
    pass


class MissingHeader(KernError):
    pass


class InvalidDocument(KernError):
    pass


@dataclass(frozen=True)
class KernLine:
    """One record. Global comments (``!!...``) have a single field and ``chord is None``."""

    kind: LineKind
    melody: str
    chord: str | None = None

    @property
    def fields(self) -> tuple[str, ...]:
        return (self.melody,) if self.chord is None else (self.melody, self.chord)

    @property
    def text(self) -> str:
        return "\t".join(self.fields)

    @property
    def is_global(self) -> bool:
        return self.chord is None

    @classmethod
    def data(cls, melody: str, chord: str = NULL) -> "KernLine":
        return cls(LineKind.DATA, melody, chord)

    @classmethod
    def both(cls, kind: LineKind, token: str) -> "KernLine":
        return cls(kind, token, token)


@dataclass(frozen=True)
class KernDocument:
    lines: tuple[KernLine, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "lines", tuple(self.lines))

    @property
    def metadata(self) -> tuple[str, ...]:
        """Reference records (``!!!KEY: value``), verbatim."""
        return tuple(l.melody for l in self.lines if l.is_global and l.melody.startswith("!!!"))

    @property
    def data_lines(self) -> list[KernLine]:
        return [l for l in self.lines if l.kind is LineKind.DATA]

    @property
    def chords(self) -> list[str]:
        return [l.chord for l in self.data_lines if l.chord != NULL]

    def __str__(self) -> str:
        return serialize_kern(self)


# --- melody tokens ----------------------------------------------------------------

_MELODY_RE = re.compile(
    r"(?P<open>[&{(\[]*)"
    r"(?P<recip>\d+)?(?P<dots>\.*)"
    r"(?P<pitch>(?P<letter>[a-gA-G])(?P=letter)*|rr?)"
    r"(?P<acc>#{1,3}|-{1,3}|n)?"
    r"(?P<tail>.*)",
    re.S,
)
_TAIL_CHARS = frozenset("LJKk]_)}'\"`~^;:/\\<>yYxXqQTtMmWwSsRO$vuzZIi|N")
_ORNAMENTS = {
    "L": "beam-start",
    "J": "beam-end",
    "[": "tie-open",
    "]": "tie-close",
    "_": "tie-continue",
    "(": "slur-open",
    ")": "slur-close",
}
MAX_RECIP = 64


@dataclass(frozen=True)
class MelodyToken:
    text: str
    duration: str | None
    dots: int
    pitch: str
    accidentals: str = ""
    ornaments: frozenset[str] = field(default_factory=frozenset)

    @property
    def is_rest(self) -> bool:
        return self.pitch.startswith("r")

    @property
    def is_grace(self) -> bool:
        return "q" in self.text or "Q" in self.text

    def beats(self) -> Fraction | None:
        """Length as a fraction of a whole note; ``None`` for grace notes."""
        if self.duration is None or self.is_grace:
            return None
        return recip_duration(self.duration, self.dots)


def recip_duration(recip: str, dots: int = 0) -> Fraction:
    """``recip_duration("4", 1) == Fraction(3, 8)``; ``"0"`` is a breve."""
    base = Fraction(2) if recip == "0" else Fraction(1, int(recip))
    return base * (2 - Fraction(1, 2**dots))


def parse_melody_token(text: str, line: int | None = None) -> MelodyToken:
    m = _MELODY_RE.fullmatch(text)
    if m is None:
        raise BadMelodyToken(f"unrecognised melody token {text!r}", line)
    recip, tail = m["recip"], m["tail"]
    bad = sorted(set(tail) - _TAIL_CHARS)
    if bad:
        raise BadMelodyToken(f"unexpected characters {''.join(bad)!r} in melody token {text!r}", line)
    if recip is not None:
        if recip != "0" and (recip.startswith("0") or not 1 <= int(recip) <= MAX_RECIP):
            raise BadMelodyToken(f"unsupported duration {recip!r} in {text!r}", line)
    elif "q" not in tail and "Q" not in tail:
        raise BadMelodyToken(f"melody token {text!r} has no duration", line)
    if m["dots"] and recip is None:
        raise BadMelodyToken(f"dots without a duration in {text!r}", line)
    pitch = m["pitch"]
    if pitch.startswith("r") and m["acc"]:
        raise BadMelodyToken(f"rest with accidental in {text!r}", line)
    if pitch.startswith("r") and ("L" in tail or "J" in tail):
        raise BadMelodyToken(f"beam marker on a rest in {text!r}", line)
    ornaments = frozenset(name for ch, name in _ORNAMENTS.items() if ch in m["open"] + tail)
    return MelodyToken(
        text=text,
        duration=recip,
        dots=len(m["dots"]),
        pitch=pitch,
        accidentals=m["acc"] or "",
        ornaments=ornaments,
    )


def _melody_tokens(field_text: str, line: int | None = None) -> list[MelodyToken]:
    if field_text == NULL:
        return []
    parts = field_text.split(" ")
    if any(not p for p in parts):
        raise BadMelodyToken(f"empty sub-token in melody field {field_text!r}", line)
    return [parse_melody_token(p, line) for p in parts]


# --- parsing ---------------------------------------------------------------------

def _classify(token: str) -> LineKind:
    if token.startswith("**"):
        return LineKind.EXCLUSIVE
    if token.startswith("*"):
        return LineKind.INTERPRETATION
    if token.startswith("="):
        return LineKind.BARLINE
    if token.startswith("!"):
        return LineKind.COMMENT
    return LineKind.DATA


def _parse_line(raw: str, lineno: int) -> KernLine:
    if raw.startswith("!!"):
        if "\t" in raw:
            raise SpineCountError("global comment contains a tab", lineno)
        kind = LineKind.LINEBREAK if raw == LINEBREAK else LineKind.COMMENT
        return KernLine(kind, raw)
    fields = raw.split("\t")
    if len(fields) != 2:
        raise SpineCountError(f"expected 2 tab-separated fields, found {len(fields)}", lineno)
    kinds = {_classify(f) for f in fields}
    if len(kinds) != 1:
        raise InvalidDocument(f"fields of different record types: {raw!r}", lineno)
    kind = kinds.pop()
    if kind is LineKind.INTERPRETATION and _SPINE_MANIPULATORS & set(fields):
        raise InvalidDocument(f"spine splits/merges are not supported: {raw!r}", lineno)
    if kind is LineKind.DATA and (not fields[0] or not fields[1]):
        raise InvalidDocument(f"empty field in {raw!r}", lineno)
    return KernLine(kind, fields[0], fields[1])


def _normalize_newlines(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def parse_kern(text: str, *, strict: bool = True) -> KernDocument:
    """Parse a two-spine lead sheet.

    With ``strict`` (the default) every melody and chord token is checked;
    otherwise only the record structure is, and :func:`validate_document`
    reports token problems as diagnostics.
    """
    text = _normalize_newlines(text)
    raw_lines = text.split("\n")
    if raw_lines and raw_lines[-1] == "":
        raw_lines.pop()

    lines: list[KernLine] = []
    for i, raw in enumerate(raw_lines, start=1):
        if raw == "":
            raise InvalidDocument("blank line", i)
        lines.append(_parse_line(raw, i))

    spine_idx = [i for i, l in enumerate(lines) if not l.is_global]
    if not spine_idx or lines[spine_idx[-1]].fields != (TERMINATOR, TERMINATOR):
        raise MissingTerminator("document does not end with spine terminators", len(lines) or None)
    first = lines[spine_idx[0]]
    if first.kind is not LineKind.EXCLUSIVE:
        raise MissingHeader("document does not start with an exclusive interpretation", spine_idx[0] + 1)
    if first.melody != MELODY_SPINE or first.chord not in (CHORD_SPINE, *LEGACY_CHORD_SPINES):
        raise MissingHeader(f"expected '**kern' and '**harte' spines, found {first.text!r}", spine_idx[0] + 1)
    lines[spine_idx[0]] = KernLine(LineKind.EXCLUSIVE, MELODY_SPINE, CHORD_SPINE)
    for i in spine_idx[1:]:
        if lines[i].kind is LineKind.EXCLUSIVE:
            raise InvalidDocument("repeated exclusive interpretation", i + 1)
        if TERMINATOR in lines[i].fields and i != spine_idx[-1]:
            raise InvalidDocument("spine terminator before end of document", i + 1)

    if strict:
        for i, line in enumerate(lines, start=1):
            if line.kind is not LineKind.DATA:
                continue
            _melody_tokens(line.melody, i)
            if line.chord != NULL:
                try:
                    harte.parse_chord(line.chord)
                except harte.HarteError as exc:
                    raise BadChordToken(str(exc), i) from exc
    return KernDocument(tuple(lines))


def read_kern(path: str | Path, *, strict: bool = True) -> KernDocument:
    path = Path(path)
    try:
        return parse_kern(path.read_text(encoding="utf-8"), strict=strict)
    except KernError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def serialize_kern(doc: KernDocument) -> str:
    out = []
    for i, line in enumerate(doc.lines, start=1):
        if any("\t" in f or "\n" in f for f in line.fields):
            raise InvalidDocument("field contains a tab or newline", i)
        if line.is_global and not line.melody.startswith("!!"):
            raise InvalidDocument(f"single-field line is not a global comment: {line.melody!r}", i)
        out.append(line.text)
    return "\n".join(out) + "\n" if out else ""


# --- regions ---------------------------------------------------------------------

def _context_key(line: KernLine) -> str | None:
    if line.kind is not LineKind.INTERPRETATION:
        return None
    tok = line.melody
    if tok.startswith("*clef"):
        return "clef"
    if tok.startswith("*k["):
        return "key"
    if re.match(r"\*M\d", tok):
        return "meter"
    return None


def split_regions(doc: KernDocument, include_context: bool = True) -> list[KernDocument]:
    """Cut the document at every linebreak marker (markers are dropped).

    With ``include_context`` each later region is made self-contained: it gets
    the header, the clef and key signature in force, the meter when it differs
    from the opening one, and a terminator line.
    """
    chunks: list[list[KernLine]] = [[]]
    for line in doc.lines:
        if line.kind is LineKind.LINEBREAK:
            chunks.append([])
        else:
            chunks[-1].append(line)
    if not include_context:
        return [KernDocument(tuple(c)) for c in chunks]

    header = next((l for l in doc.lines if l.kind is LineKind.EXCLUSIVE), KernLine.both(LineKind.EXCLUSIVE, "**kern"))
    terminator = KernLine.both(LineKind.INTERPRETATION, TERMINATOR)
    initial_meter: KernLine | None = None
    active: dict[str, KernLine] = {}
    regions = []
    for n, chunk in enumerate(chunks):
        lines = list(chunk)
        if n > 0:
            redefined = set()
            for l in chunk:
                if l.kind is LineKind.DATA:
                    break
                key = _context_key(l)
                if key:
                    redefined.add(key)
            prefix = [header]
            for key in ("clef", "key", "meter"):
                if key not in active or key in redefined:
                    continue
                if key == "meter" and active[key] == initial_meter:
                    continue
                prefix.append(active[key])
            lines = prefix + lines
        if not lines or lines[-1].fields != terminator.fields:
            lines.append(terminator)
        regions.append(KernDocument(tuple(lines)))
        for l in chunk:
            key = _context_key(l)
            if key:
                active[key] = l
                if key == "meter" and initial_meter is None:
                    initial_meter = l
    return regions


_BAR_NUMBER_RE = re.compile(r"^(=+)\d+[a-z]?")


def strip_annotations(doc: KernDocument, keep_linebreaks: bool = True) -> KernDocument:
    """Drop comments (and reference records) and measure numbers."""
    out = []
    for line in doc.lines:
        if line.kind is LineKind.COMMENT:
            continue
        if line.kind is LineKind.LINEBREAK and not keep_linebreaks:
            continue
        if line.kind is LineKind.BARLINE:
            line = replace(
                line,
                melody=_BAR_NUMBER_RE.sub(r"\1", line.melody),
                chord=_BAR_NUMBER_RE.sub(r"\1", line.chord),
            )
        out.append(line)
    return KernDocument(tuple(out))


def measure_count(doc: KernDocument) -> int:
    """Measures holding at least one data line."""
    count, has_data = 0, False
    for line in doc.lines:
        if line.kind is LineKind.DATA:
            has_data = True
        elif line.kind is LineKind.BARLINE and has_data:
            count, has_data = count + 1, False
    return count + has_data


# --- validation --------------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    severity: str
    code: str
    message: str
    line: int | None = None

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{self.severity}: {where}{self.message} [{self.code}]"

    def to_dict(self) -> dict:
        return {"severity": self.severity, "code": self.code, "line": self.line, "message": self.message}


def _meter(token: str) -> Fraction | None:
    m = re.fullmatch(r"\*M(\d+)/(\d+)", token)
    return Fraction(int(m[1]), int(m[2])) if m else None


def _iter_structure(doc: KernDocument) -> Iterator[Diagnostic]:
    spine = [(i, l) for i, l in enumerate(doc.lines, start=1) if not l.is_global]
    if not spine or spine[0][1].kind is not LineKind.EXCLUSIVE:
        yield Diagnostic("error", "missing-header", "document does not start with an exclusive interpretation")
    if not spine or spine[-1][1].fields != (TERMINATOR, TERMINATOR):
        yield Diagnostic("error", "missing-terminator", "document does not end with spine terminators")
    for i, line in enumerate(doc.lines, start=1):
        if line.is_global and not line.melody.startswith("!!"):
            yield Diagnostic("error", "spine-count", "line has one field but is not a global comment", i)


def validate_document(doc: KernDocument) -> list[Diagnostic]:
    """Report chord/melody token errors, meter mismatches, polyphony and open ties/slurs."""
    diags = list(_iter_structure(doc))
    meter: Fraction | None = None
    total = Fraction(0)
    measure_lines: list[int] = []
    seen_bar = False
    ties: list[int] = []
    slurs: list[int] = []
    last_data = max((i for i, l in enumerate(doc.lines, start=1) if l.kind is LineKind.DATA), default=0)

    def close_measure() -> None:
        if not measure_lines or meter is None:
            return
        # pickup and closing measures may be incomplete
        final = measure_lines[-1] == last_data
        if total != meter and not ((not seen_bar or final) and total < meter):
            diags.append(Diagnostic(
                "warning", "duration-mismatch",
                f"measure lasts {total} of a whole note, meter expects {meter}", measure_lines[0],
            ))

    for i, line in enumerate(doc.lines, start=1):
        if line.kind is LineKind.INTERPRETATION:
            meter = _meter(line.melody) or meter
        elif line.kind is LineKind.BARLINE:
            close_measure()
            seen_bar, total, measure_lines = True, Fraction(0), []
        elif line.kind is LineKind.DATA:
            if line.chord is not None and line.chord != NULL:
                try:
                    harte.parse_chord(line.chord)
                except harte.HarteError as exc:
                    diags.append(Diagnostic("error", "bad-chord", f"{line.chord!r}: {exc}", i))
            try:
                tokens = _melody_tokens(line.melody, i)
            except BadMelodyToken as exc:
                diags.append(Diagnostic("error", "bad-melody", str(exc), i))
                continue
            if len(tokens) > 1:
                diags.append(Diagnostic("warning", "polyphony", f"polyphonic melody record {line.melody!r}", i))
            if not tokens:
                continue
            measure_lines.append(i)
            length = tokens[0].beats()
            if length is not None:
                total += length
            orn = tokens[0].ornaments
            if "tie-close" in orn or "tie-continue" in orn:
                if ties:
                    ties.pop()
                else:
                    diags.append(Diagnostic("warning", "unopened-tie", "tie closes without an open tie", i))
            if "tie-open" in orn or "tie-continue" in orn:
                ties.append(i)
            for _ in range(tokens[0].text.count(")")):
                if slurs:
                    slurs.pop()
                else:
                    diags.append(Diagnostic("warning", "unopened-slur", "slur closes without an open slur", i))
            slurs.extend([i] * tokens[0].text.count("("))
    close_measure()
    diags.extend(Diagnostic("warning", "unterminated-tie", "tie is never closed", i) for i in ties)
    diags.extend(Diagnostic("warning", "unterminated-slur", "slur is never closed", i) for i in slurs)
    return diags


def iter_documents(paths: Iterable[str | Path], *, strict: bool = True) -> Iterator[tuple[Path, KernDocument]]:
    for p in sorted(Path(p) for p in paths):
        yield p, read_kern(p, strict=strict)
