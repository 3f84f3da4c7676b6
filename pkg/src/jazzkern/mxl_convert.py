"""MusicXML lead sheets to two-spine kern, keeping every chord extension.

Only single-part, partwise scores with one melodic voice are supported.
Harmonies are converted to restricted Harte labels through their degree
sets, so ``<degree>`` additions, alterations and subtractions all survive.
"""

from __future__ import annotations

import posixpath
import xml.etree.ElementTree as ET
import zipfile
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from pathlib import Path
import json

from . import harte
from .kern import LINEBREAK, KernDocument, KernLine, LineKind, TERMINATOR, CHORD_SPINE, MELODY_SPINE

__all__ = [
    "HarmonyDegree",
    "HarmonyElement",
    "MelodyNote",
    "Conversion",
    "ConversionError",
    "UnknownKind",
    "UnmappableDegree",
    "OctaveOutOfRange",
    "NonRepresentableDuration",
    "MultiPartUnsupported",
    "PolyphonyError",
    "LegacyHarmonyText",
    "HarmonyPlacementError",
    "convert_harmony",
    "kind_degrees",
    "pitch_to_kern",
    "duration_to_recip",
    "parse_harmony",
    "load_musicxml",
    "convert_musicxml",
    "convert_score",
]

class ConversionError(ValueError):
    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class UnknownKind(ConversionError):
    pass


class UnmappableDegree(ConversionError):
    pass


class OctaveOutOfRange(ConversionError):
    pass


class NonRepresentableDuration(ConversionError):
    pass


class MultiPartUnsupported(ConversionError):
    pass


class PolyphonyError(ConversionError):
    pass


class LegacyHarmonyText(ConversionError):
    """``<kind text=...>`` names a different chord than the kind itself."""


class HarmonyPlacementError(ConversionError):
    """A harmony has no free note to attach to."""


@dataclass(frozen=True)
class HarmonyDegree:
    value: int
    alter: int = 0
    type: str = "add"


@dataclass(frozen=True)
class HarmonyElement:
    root_step: str
    kind: str
    root_alter: int = 0
    degrees: tuple[HarmonyDegree, ...] = ()
    bass_step: str | None = None
    bass_alter: int = 0
    kind_text: str | None = None
    offset: int = 0


@dataclass(frozen=True)
class MelodyNote:
    duration: int
    step: str | None = None
    alter: int = 0
    octave: int | None = None
    dots: int = 0
    rest: bool = False
    measure_rest: bool = False
    tie_start: bool = False
    tie_stop: bool = False
    slur_starts: int = 0
    slur_stops: int = 0
    beams: tuple[str, ...] = ()
    voice: str | None = None
    staff: str | None = None
    chord: bool = False
    grace: bool = False


# --- chords ---------------------------------------------------------------------

@lru_cache(maxsize=None)
def _kinds() -> dict[str, frozenset[harte.Degree]]:
    raw = json.loads(resources.files("jazzkern.data").joinpath("kinds.json").read_text(encoding="utf-8"))
    tables = harte.default_tables()
    out = {}
    for kind, entry in raw.items():
        if isinstance(entry, str):
            out[kind] = tables.degrees_of(entry)
        else:
            out[kind] = frozenset(harte.parse_degree(d) for d in entry)
    return out


def kind_degrees(kind: str) -> frozenset[harte.Degree]:
    """Degree template of a MusicXML ``<kind>`` value."""
    try:
        return _kinds()[kind.strip()]
    except KeyError:
        raise UnknownKind(f"unsupported harmony kind {kind!r}") from None


def _spell(step: str, alter: int) -> str:
    if step not in "ABCDEFG" or len(step) != 1:
        raise ConversionError(f"bad pitch step {step!r}")
    return step + ("#" * alter if alter > 0 else "b" * -alter)


def _harmony_degrees(h: HarmonyElement) -> frozenset[harte.Degree]:
    degrees = set(kind_degrees(h.kind))
    for d in h.degrees:
        if not harte.MIN_DEGREE <= d.value <= harte.MAX_DEGREE:
            raise UnmappableDegree(f"degree value {d.value} outside 1..13")
        same_number = {x for x in degrees if x[0] == d.value}
        if d.type == "add":
            degrees.add((d.value, d.alter))
        elif d.type == "alter":
            degrees -= same_number
            degrees.add((d.value, d.alter))
        elif d.type == "subtract":
            if not same_number:
                raise UnmappableDegree(f"cannot subtract degree {d.value}: {h.kind!r} chord has none")
            degrees -= same_number
        else:
            raise UnmappableDegree(f"unknown degree type {d.type!r}")
    return frozenset(degrees)


def convert_harmony(h: HarmonyElement) -> harte.HarteChord:
    """Canonical Harte chord for a MusicXML harmony.

    >>> str(convert_harmony(HarmonyElement("C", "dominant", degrees=(HarmonyDegree(9, -1),))))
    'C:7(b9)'
    """
    root = _spell(h.root_step, h.root_alter)
    bass = None
    if h.bass_step is not None:
        bass = harte.interval_between(root, _spell(h.bass_step, h.bass_alter))
        if bass == "1":
            bass = None
    chord = harte.encode_degrees(root, _harmony_degrees(h), bass)
    result = harte.validate_chord(chord)
    if not result.ok:
        raise UnmappableDegree("; ".join(v.message for v in result.errors))
    return chord


def _suggest_kind(text: str, root: str) -> str | None:
    try:
        degrees = harte.degree_set(harte.normalize_surface(text, root))
    except harte.HarteError:
        return None
    for kind, template in _kinds().items():
        if template == degrees:
            return kind
    return None


def _check_kind_text(h: HarmonyElement) -> str | None:
    """Suggested kind when the display text contradicts the kind, else ``None``."""
    if not h.kind_text:
        return None
    root = _spell(h.root_step, h.root_alter)
    try:
        shown = harte.normalize_surface(h.kind_text, root)
    except harte.HarteError:
        return None
    if harte.degree_set(shown) == kind_degrees(h.kind):
        return None
    return _suggest_kind(h.kind_text, root) or "?"


# --- pitches and durations ---------------------------------------------------------

def pitch_to_kern(step: str, alter: int, octave: int) -> str:
    """``("E", 0, 5) -> "ee"``; octave 4 starts at middle C."""
    if step not in "ABCDEFG" or len(step) != 1:
        raise ConversionError(f"bad pitch step {step!r}")
    if alter != int(alter):
        raise ConversionError(f"microtonal alter {alter} has no kern spelling")
    if not 0 <= octave <= 9:
        raise OctaveOutOfRange(f"octave {octave} outside 0..9")
    letters = step.lower() * (octave - 3) if octave >= 4 else step * (4 - octave)
    alter = int(alter)
    return letters + ("#" * alter if alter > 0 else "-" * -alter)


MAX_RECIP = 64


def duration_to_recip(duration: int, divisions_per_quarter: int, dots: int | None = 0) -> str:
    """Kern recip for a duration in MusicXML divisions.

    ``dots=None`` picks the smallest dot count (up to 3) that makes the
    duration representable.
    """
    if duration <= 0 or divisions_per_quarter <= 0:
        raise NonRepresentableDuration(f"non-positive duration {duration}/{divisions_per_quarter}")
    whole = Fraction(duration, 4 * divisions_per_quarter)
    for n in ([dots] if dots is not None else range(4)):
        base = whole / (2 - Fraction(1, 2**n))
        if base == 2:
            return "0" + "." * n
        if base.numerator == 1 and base.denominator <= MAX_RECIP:
            return str(base.denominator) + "." * n
    dotted = f" with {dots} dot(s)" if dots is not None else ""
    raise NonRepresentableDuration(f"{whole} of a whole note{dotted} has no kern recip")


# --- XML reading ------------------------------------------------------------------

def _strip_ns(root: ET.Element) -> ET.Element:
    for el in root.iter():
        if isinstance(el.tag, str) and "}" in el.tag:
            el.tag = el.tag.split("}", 1)[1]
    return root


def load_musicxml(source: str | Path | bytes) -> ET.Element:
    """Root ``<score-partwise>`` of a ``.xml``/``.musicxml``/``.mxl`` file, or of raw XML bytes."""
    if isinstance(source, bytes):
        return _strip_ns(ET.fromstring(source))
    path = Path(source)
    if path.suffix.lower() == ".mxl":
        with zipfile.ZipFile(path) as zf:
            names = zf.namelist()
            rootfile = None
            if "META-INF/container.xml" in names:
                container = _strip_ns(ET.fromstring(zf.read("META-INF/container.xml")))
                rf = container.find(".//rootfile")
                if rf is not None:
                    rootfile = rf.get("full-path")
            if rootfile is None:
                rootfile = next(n for n in names if n.endswith((".xml", ".musicxml")) and not n.startswith("META-INF"))
            return _strip_ns(ET.fromstring(zf.read(posixpath.normpath(rootfile))))
    return _strip_ns(ET.parse(path).getroot())


def _int(el: ET.Element | None, default: int = 0) -> int:
    if el is None or el.text is None or not el.text.strip():
        return default
    value = float(el.text)
    if value != int(value):
        raise ConversionError(f"non-integral value {el.text!r} in <{el.tag}>")
    return int(value)


def parse_harmony(el: ET.Element) -> HarmonyElement:
    root = el.find("root")
    if root is None:
        raise ConversionError("harmony without <root> (function-only harmonies are unsupported)")
    kind_el = el.find("kind")
    kind = (kind_el.text or "").strip() if kind_el is not None else ""
    bass = el.find("bass")
    return HarmonyElement(
        root_step=(root.findtext("root-step") or "").strip(),
        root_alter=_int(root.find("root-alter")),
        kind=kind,
        degrees=tuple(
            HarmonyDegree(
                value=_int(d.find("degree-value")),
                alter=_int(d.find("degree-alter")),
                type=(d.findtext("degree-type") or "add").strip(),
            )
            for d in el.findall("degree")
        ),
        bass_step=(bass.findtext("bass-step") or "").strip() if bass is not None else None,
        bass_alter=_int(bass.find("bass-alter")) if bass is not None else 0,
        kind_text=kind_el.get("text") if kind_el is not None else None,
        offset=_int(el.find("offset")),
    )


def _parse_note(el: ET.Element) -> MelodyNote:
    pitch = el.find("pitch")
    rest = el.find("rest")
    notations = el.findall("notations")
    ties = {t.get("type") for t in el.findall("tie")}
    ties |= {t.get("type") for n in notations for t in n.findall("tied")}
    slurs = [s.get("type") for n in notations for s in n.findall("slur")]
    return MelodyNote(
        duration=_int(el.find("duration")),
        step=pitch.findtext("step").strip() if pitch is not None else None,
        alter=_int(pitch.find("alter")) if pitch is not None else 0,
        octave=_int(pitch.find("octave")) if pitch is not None else None,
        dots=len(el.findall("dot")),
        rest=rest is not None,
        measure_rest=rest is not None and rest.get("measure") == "yes",
        tie_start="start" in ties,
        tie_stop="stop" in ties,
        slur_starts=slurs.count("start"),
        slur_stops=slurs.count("stop"),
        beams=tuple((b.text or "").strip() for b in el.findall("beam")),
        voice=el.findtext("voice"),
        staff=el.findtext("staff"),
        chord=el.find("chord") is not None,
        grace=el.find("grace") is not None,
    )


def _midi(note: MelodyNote) -> int:
    return 12 * note.octave + {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}[note.step] + note.alter


def _note_token(note: MelodyNote, divisions: int) -> str:
    dots = None if note.measure_rest else note.dots
    try:
        recip = duration_to_recip(note.duration, divisions, dots)
    except NonRepresentableDuration:
        if not note.rest:
            raise
        recip = duration_to_recip(note.duration, divisions, None)
    if note.rest:
        return recip + "r"
    if note.step is None or note.octave is None:
        raise ConversionError("unpitched note")
    prefix = "(" * note.slur_starts
    if note.tie_start and not note.tie_stop:
        prefix += "["
    suffix = ""
    if note.tie_start and note.tie_stop:
        suffix += "_"
    elif note.tie_stop:
        suffix += "]"
    suffix += "L" * note.beams.count("begin") + "J" * note.beams.count("end")
    suffix += "K" * note.beams.count("forward hook") + "k" * note.beams.count("backward hook")
    suffix += ")" * note.slur_stops
    return prefix + recip + pitch_to_kern(note.step, note.alter, note.octave) + suffix


# --- interpretations -------------------------------------------------------------

_SHARPS = "fcgdaeb"


def _key_token(fifths: int) -> str:
    if fifths >= 0:
        return "*k[" + "".join(p + "#" for p in _SHARPS[:fifths]) + "]"
    return "*k[" + "".join(p + "-" for p in _SHARPS[::-1][:-fifths]) + "]"


def _clef_token(clef: ET.Element) -> str:
    sign = (clef.findtext("sign") or "G").strip()
    line = (clef.findtext("line") or "").strip()
    change = _int(clef.find("clef-octave-change"))
    octave = "v" * -change if change < 0 else "^" * change
    return f"*clef{sign}{octave}{line}"


def _attribute_tokens(attrs: ET.Element) -> list[str]:
    out = []
    for clef in attrs.findall("clef"):
        if clef.get("number") in (None, "1"):
            out.append(_clef_token(clef))
    key = attrs.find("key")
    if key is not None and key.find("fifths") is not None:
        out.append(_key_token(_int(key.find("fifths"))))
    time = attrs.find("time")
    if time is not None and time.find("beats") is not None:
        out.append(f"*M{time.findtext('beats').strip()}/{time.findtext('beat-type').strip()}")
    return out


# --- score conversion --------------------------------------------------------------

@dataclass
class Conversion:
    document: KernDocument
    warnings: list[str] = field(default_factory=list)
    harmony_count: int = 0
    system_breaks: int = 0


@dataclass
class _Slot:
    onset: int
    line: int


def convert_musicxml(
    source: str | Path | bytes | ET.Element,
    *,
    top_voice: bool = False,
    strict_harmony: bool = True,
) -> Conversion:
    """Convert a MusicXML lead sheet and report warnings alongside the document.

    ``top_voice`` keeps only the first voice and the highest note of chords
    instead of raising :class:`PolyphonyError`. Kind/text contradictions
    (e.g. ``<kind text="6">major</kind>``) raise :class:`LegacyHarmonyText`
    naming a suggested kind; ``strict_harmony=False`` downgrades them to
    warnings and keeps the kind as written.
    """
    root = source if isinstance(source, ET.Element) else load_musicxml(source)
    if root.tag != "score-partwise":
        raise ConversionError(f"expected <score-partwise>, found <{root.tag}>")
    parts = root.findall("part")
    if len(parts) != 1:
        raise MultiPartUnsupported(f"expected one part, found {len(parts)}")

    conv = Conversion(KernDocument())
    lines: list[KernLine] = [KernLine(LineKind.EXCLUSIVE, MELODY_SPINE, CHORD_SPINE)]
    chords: dict[int, str] = {}
    pending: list[tuple[str, str]] = []  # (label, location) waiting for the next note
    divisions = 1
    main_voice: str | None = None

    def warn(msg: str) -> None:
        conv.warnings.append(msg)

    def attach(label: str, slot: _Slot, where: str) -> None:
        if slot.line in chords:
            raise HarmonyPlacementError(f"two harmonies attach to the same note ({chords[slot.line]}, {label})", where)
        chords[slot.line] = label

    for m_idx, measure in enumerate(parts[0].findall("measure")):
        number = measure.get("number") or str(m_idx + 1)
        if m_idx > 0:
            lines.append(KernLine.both(LineKind.BARLINE, f"={number}" if number.isdigit() else "="))
            breaks = [p for p in measure.findall("print") if "yes" in (p.get("new-system"), p.get("new-page"))]
            if breaks:
                lines.append(KernLine(LineKind.LINEBREAK, LINEBREAK))
                conv.system_breaks += 1

        pos = 0
        cursor: int | None = None  # where the main voice expects its next note
        slots: list[_Slot] = []
        harmonies: list[tuple[int, str, str]] = []
        last_note: MelodyNote | None = None
        for child in measure:
            tag = child.tag
            where = f"measure {number}"
            if tag == "attributes":
                divisions = _int(child.find("divisions"), divisions)
                for tok in _attribute_tokens(child):
                    lines.append(KernLine.both(LineKind.INTERPRETATION, tok))
            elif tag == "harmony":
                h = parse_harmony(child)
                if h.kind == "none":
                    warn(f"{where}: no-chord harmony skipped")
                    continue
                suggestion = _check_kind_text(h)
                if suggestion is not None:
                    msg = f"kind {h.kind!r} is displayed as {h.kind_text!r}; suggested kind: {suggestion}"
                    if strict_harmony:
                        raise LegacyHarmonyText(msg, where)
                    warn(f"{where}: {msg}")
                try:
                    label = harte.serialize_chord(convert_harmony(h))
                except ConversionError as exc:
                    raise type(exc)(str(exc), where) from exc
                conv.harmony_count += 1
                harmonies.append((pos + h.offset, label, where))
            elif tag == "backup":
                pos -= _int(child.find("duration"))
            elif tag == "forward":
                pos += _int(child.find("duration"))
            elif tag == "note":
                note = _parse_note(child)
                if note.grace:
                    warn(f"{where}: grace note skipped")
                    continue
                if main_voice is None:
                    main_voice = note.voice
                if note.voice != main_voice:
                    if not top_voice:
                        raise PolyphonyError(f"second voice {note.voice!r}", where)
                    if not note.chord:
                        pos += note.duration
                    continue
                if note.chord:
                    if not top_voice:
                        raise PolyphonyError("chord in the melody", where)
                    if last_note is not None and not note.rest and not last_note.rest and _midi(note) > _midi(last_note):
                        lines[slots[-1].line] = KernLine.data(_note_token(note, divisions))
                        last_note = note
                    continue
                if cursor is not None and pos < cursor:
                    raise PolyphonyError("overlapping notes in one voice", where)
                if cursor is not None and pos > cursor:
                    lines.append(KernLine.data(duration_to_recip(pos - cursor, divisions, None) + "r"))
                    slots.append(_Slot(cursor, len(lines) - 1))
                try:
                    token = _note_token(note, divisions)
                except ConversionError as exc:
                    raise type(exc)(str(exc), where) from exc
                lines.append(KernLine.data(token))
                slots.append(_Slot(pos, len(lines) - 1))
                last_note = note
                pos += note.duration
                cursor = pos

        if slots:
            for label, where in pending:
                attach(label, slots[0], where)
            pending = []
        for offset, label, where in harmonies:
            exact = [s for s in slots if s.onset == offset]
            later = [s for s in slots if s.onset > offset]
            if exact:
                attach(label, exact[0], where)
            elif later:
                warn(f"{where}: harmony {label} at offset {offset} moved to the next note")
                attach(label, later[0], where)
            else:
                warn(f"{where}: harmony {label} moved to the next measure")
                pending.append((label, where))

    if pending:
        raise HarmonyPlacementError(f"harmony {pending[0][0]} has no following note", pending[0][1])
    lines.append(KernLine.both(LineKind.BARLINE, "=="))
    lines.append(KernLine.both(LineKind.INTERPRETATION, TERMINATOR))
    for idx, label in chords.items():
        lines[idx] = KernLine.data(lines[idx].melody, label)
    conv.document = KernDocument(tuple(lines))
    return conv


def convert_score(source: str | Path | bytes | ET.Element, **options) -> KernDocument:
    return convert_musicxml(source, **options).document
