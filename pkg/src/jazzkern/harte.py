"""Restricted Harte chord labels: ``root:shorthand(ext1,ext2,...)/bass``.

Only the 24 shorthands in ``data/shorthands.json`` are allowed, and a chord
may not use extensions to spell something a different shorthand already
covers more directly (``C:maj(7,b9)`` must be written ``C:maj7(b9)``).

Degrees are handled as ``(number, alteration)`` pairs, e.g. ``b9 -> (9, -1)``.
Extensions are applied to a shorthand's degree set as follows:

* ``noX`` removes exactly the degree ``X`` (which must be present);
* a plain or altered degree replaces every degree of the shorthand sharing its
  number, so ``C:7(b5)`` flattens the fifth and ``C:7(b9)`` adds a flat ninth.

A chord is valid when its extension list is the shortest way to reach its
degree set from its shorthand, and no other shorthand reaches that set with
fewer extensions.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

__all__ = [
    "SHORTHANDS",
    "ROOT_SPELLINGS",
    "CONFIG_ENV",
    "Degree",
    "Extension",
    "HarteChord",
    "SurfaceSymbol",
    "ChordTables",
    "Violation",
    "ValidationResult",
    "HarteError",
    "ChordSyntaxError",
    "UnknownShorthand",
    "ShorthandExpressible",
    "DuplicateExtension",
    "InvalidChord",
    "UnknownSurfaceSymbol",
    "parse_chord",
    "serialize_chord",
    "validate_chord",
    "normalize_surface",
    "chords_equivalent",
    "canonicalize",
    "encode_degrees",
    "degree_set",
    "parse_degree",
    "format_degree",
    "interval_between",
    "default_tables",
    "load_tables",
]

SHORTHANDS: tuple[str, ...] = (
    "aug", "aug7", "dim", "dim7", "hdim7", "maj", "maj11", "maj13", "maj6",
    "maj7", "maj9", "min", "min11", "min13", "min6", "min7", "min9", "minmaj7",
    "sus2", "sus4", "11", "13", "7", "9",
)

ROOT_SPELLINGS: tuple[str, ...] = (
    "C", "D", "E", "F", "G", "A", "B",
    "C#", "D#", "F#", "G#", "A#",
    "Db", "Eb", "Gb", "Ab", "Bb",
)

#: Environment variable naming a directory that may hold ``shorthands.json``
#: and/or ``aliases.json`` overriding the bundled tables.
CONFIG_ENV = "JAZZKERN_CONFIG_DIR"

Degree = tuple[int, int]

MIN_DEGREE, MAX_DEGREE = 1, 13

_ROOT_RE = re.compile(r"[A-G](?:#*|b*)")
_CHORD_RE = re.compile(
    r"(?P<root>[A-G](?:#*|b*))"
    r":(?P<shorthand>[^(/:]+)"
    r"(?:\((?P<extensions>[^()]*)\))?"
    r"(?:/(?P<bass>[^/]*))?"
)
_EXTENSION_RE = re.compile(r"(?P<no>no)?(?P<acc>#*|b*)(?P<degree>[1-9][0-9]*)")
_DEGREE_RE = re.compile(r"(?P<acc>#*|b*)(?P<degree>[1-9][0-9]*)")

# Semitones above the root of the unaltered degrees 1..7.
_MAJOR_SCALE = (0, 2, 4, 5, 7, 9, 11)
_LETTER_PC = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
_LETTERS = "CDEFGAB"


class HarteError(ValueError):
    """Base class for chord label errors."""


class ChordSyntaxError(HarteError):
    """The label does not match ``root:shorthand(extensions)/bass``."""


class UnknownShorthand(HarteError):
    pass


class ShorthandExpressible(HarteError):
    """The chord spells with extensions what a shorthand already covers."""


class DuplicateExtension(HarteError):
    pass


class InvalidChord(HarteError):
    pass


class UnknownSurfaceSymbol(HarteError):
    pass


def parse_degree(text: str) -> Degree:
    """``"b9" -> (9, -1)``, ``"#11" -> (11, 1)``, ``"5" -> (5, 0)``."""
    m = _DEGREE_RE.fullmatch(text)
    if m is None:
        raise ChordSyntaxError(f"malformed degree {text!r}")
    acc = m["acc"]
    return int(m["degree"]), acc.count("#") - acc.count("b")


def format_degree(degree: Degree) -> str:
    number, alter = degree
    return ("#" * alter if alter > 0 else "b" * -alter) + str(number)


@dataclass(frozen=True)
class Extension:
    degree: int
    accidentals: str = ""
    removal: bool = False

    @classmethod
    def parse(cls, text: str) -> "Extension":
        m = _EXTENSION_RE.fullmatch(text)
        if m is None:
            raise ChordSyntaxError(f"malformed extension {text!r}")
        return cls(degree=int(m["degree"]), accidentals=m["acc"], removal=bool(m["no"]))

    @property
    def interval(self) -> Degree:
        return self.degree, self.accidentals.count("#") - self.accidentals.count("b")

    def __str__(self) -> str:
        return ("no" if self.removal else "") + self.accidentals + str(self.degree)


@dataclass(frozen=True)
class HarteChord:
    root: str
    shorthand: str
    extensions: tuple[Extension, ...] = ()
    bass: str | None = None

    def __post_init__(self) -> None:
        exts = tuple(
            e if isinstance(e, Extension) else Extension.parse(str(e)) for e in self.extensions
        )
        object.__setattr__(self, "extensions", exts)

    def __str__(self) -> str:
        return serialize_chord(self)

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "shorthand": self.shorthand,
            "extensions": [str(e) for e in self.extensions],
            "bass": self.bass,
        }


@dataclass(frozen=True)
class SurfaceSymbol:
    """A chord quality as written on the page, e.g. ``"Δ7"`` or ``"mi"``."""

    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("surface symbol must be non-empty")


@dataclass(frozen=True)
class ChordTables:
    """Shorthand degree sets (in tie-break preference order) and surface aliases."""

    shorthands: Mapping[str, frozenset[Degree]]
    aliases: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_json(cls, shorthands: Mapping[str, Sequence[str]], aliases: Mapping[str, str]) -> "ChordTables":
        table = {name: frozenset(parse_degree(d) for d in degrees) for name, degrees in shorthands.items()}
        return cls(shorthands=table, aliases=dict(aliases))

    def degrees_of(self, shorthand: str) -> frozenset[Degree]:
        try:
            return self.shorthands[shorthand]
        except KeyError:
            raise UnknownShorthand(f"unknown shorthand {shorthand!r}") from None


def _read_json(name: str, config_dir: Path | None) -> dict:
    if config_dir is not None and (config_dir / name).is_file():
        return json.loads((config_dir / name).read_text(encoding="utf-8"))
    return json.loads(resources.files("jazzkern.data").joinpath(name).read_text(encoding="utf-8"))


def load_tables(config_dir: str | os.PathLike | None = None) -> ChordTables:
    """Load the shorthand and alias tables, preferring files in ``config_dir``.

    ``shorthands.json`` maps each shorthand to its degree list
    (``{"7": ["1", "3", "5", "b7"], ...}``); key order is the tie-break
    preference used by :func:`encode_degrees`. ``aliases.json`` maps surface
    quality strings to a canonical quality, optionally with extensions
    (``{"Δ7": "maj7", "7b9": "7(b9)"}``).
    """
    path = Path(config_dir) if config_dir is not None else None
    tables = ChordTables.from_json(_read_json("shorthands.json", path), _read_json("aliases.json", path))
    for surface, quality in tables.aliases.items():
        try:
            parse_chord(f"C:{quality}", tables)
        except HarteError as exc:
            raise HarteError(f"alias {surface!r} -> {quality!r} is not a valid quality: {exc}") from exc
    return tables


@lru_cache(maxsize=None)
def _cached_tables(config_dir: str | None) -> ChordTables:
    return load_tables(config_dir)


def default_tables() -> ChordTables:
    return _cached_tables(os.environ.get(CONFIG_ENV) or None)


# --- degree-set algebra -------------------------------------------------------

def _by_number(degrees: Iterable[Degree]) -> dict[int, set[int]]:
    out: dict[int, set[int]] = {}
    for number, alter in degrees:
        out.setdefault(number, set()).add(alter)
    return out


def _apply(base: frozenset[Degree], extensions: Sequence[Extension]) -> frozenset[Degree]:
    result = set(base)
    for ext in extensions:
        if ext.removal:
            result.discard(ext.interval)
    added = _by_number(e.interval for e in extensions if not e.removal)
    for number, alters in added.items():
        result = {d for d in result if d[0] != number}
        result.update((number, a) for a in alters)
    return frozenset(result)


def _cost(base: frozenset[Degree], target: frozenset[Degree]) -> int:
    b, t = _by_number(base), _by_number(target)
    cost = 0
    for number in b.keys() | t.keys():
        have, want = b.get(number, set()), t.get(number, set())
        if have != want:
            cost += len(want) if want else len(have)
    return cost


def _extensions_between(base: frozenset[Degree], target: frozenset[Degree]) -> tuple[Extension, ...]:
    b, t = _by_number(base), _by_number(target)
    out = []
    for number in sorted(b.keys() | t.keys()):
        have, want = b.get(number, set()), t.get(number, set())
        if have == want:
            continue
        removal = not want
        for alter in sorted(want or have):
            acc = "#" * alter if alter > 0 else "b" * -alter
            out.append(Extension(degree=number, accidentals=acc, removal=removal))
    return tuple(out)


def degree_set(chord: HarteChord, tables: ChordTables | None = None) -> frozenset[Degree]:
    """Degrees implied by the chord's shorthand with its extensions applied."""
    tables = tables or default_tables()
    return _apply(tables.degrees_of(chord.shorthand), chord.extensions)


def encode_degrees(
    root: str,
    degrees: Iterable[Degree],
    bass: str | None = None,
    tables: ChordTables | None = None,
) -> HarteChord:
    """Spell a degree set as the canonical chord: the cheapest shorthand plus extensions.

    Ties on extension count go to the shorthand listed first in the table.
    Extensions come out sorted by degree number.
    """
    tables = tables or default_tables()
    target = frozenset(degrees)
    best = min(tables.shorthands, key=lambda name: _cost(tables.shorthands[name], target))
    return HarteChord(root, best, _extensions_between(tables.shorthands[best], target), bass)


def canonicalize(chord: HarteChord, tables: ChordTables | None = None) -> HarteChord:
    tables = tables or default_tables()
    return encode_degrees(chord.root, degree_set(chord, tables), _canonical_bass(chord.bass), tables)


# --- validation -------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    severity: str = "error"


@dataclass
class ValidationResult:
    violations: list[Violation] = field(default_factory=list)

    @property
    def errors(self) -> list[Violation]:
        return [v for v in self.violations if v.severity == "error"]

    @property
    def warnings(self) -> list[Violation]:
        return [v for v in self.violations if v.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return self.ok

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


_ERRORS = {
    "syntax": ChordSyntaxError,
    "unknown-shorthand": UnknownShorthand,
    "shorthand-expressible": ShorthandExpressible,
    "duplicate-extension": DuplicateExtension,
}


def validate_chord(chord: HarteChord, tables: ChordTables | None = None) -> ValidationResult:
    """Collect every rule the chord breaks; never raises."""
    tables = tables or default_tables()
    result = ValidationResult()
    add = result.violations.append

    if not _ROOT_RE.fullmatch(chord.root):
        add(Violation("syntax", f"bad root spelling {chord.root!r}"))
    elif len(chord.root) > 2:
        add(Violation("double-accidental", f"root {chord.root!r} has a double accidental", "warning"))
    if chord.bass is not None:
        if not _DEGREE_RE.fullmatch(chord.bass):
            add(Violation("syntax", f"bad bass degree {chord.bass!r}"))
        elif not MIN_DEGREE <= parse_degree(chord.bass)[0] <= MAX_DEGREE:
            add(Violation("degree-out-of-range", f"bass degree {chord.bass!r} outside 1..13"))

    if chord.shorthand not in tables.shorthands:
        add(Violation("unknown-shorthand", f"unknown shorthand {chord.shorthand!r}"))
        return result
    base = tables.shorthands[chord.shorthand]

    seen: set[Degree] = set()
    for ext in chord.extensions:
        if not MIN_DEGREE <= ext.degree <= MAX_DEGREE:
            add(Violation("degree-out-of-range", f"extension {ext} outside 1..13"))
        if ext.interval in seen:
            add(Violation("duplicate-extension", f"degree {format_degree(ext.interval)} appears twice"))
        seen.add(ext.interval)
        if ext.removal and ext.interval not in base:
            add(Violation("invalid-removal", f"{ext} removes a degree {chord.shorthand!r} does not contain"))
    if result.errors:
        return result

    target = _apply(base, chord.extensions)
    needed = _cost(base, target)
    if len(chord.extensions) > needed:
        add(Violation(
            "shorthand-expressible",
            f"extensions ({', '.join(map(str, chord.extensions))}) are not minimal for {chord.shorthand!r}",
        ))
    else:
        better = [name for name, degs in tables.shorthands.items() if _cost(degs, target) < needed]
        if better:
            alt = encode_degrees(chord.root, target, chord.bass, tables)
            add(Violation(
                "shorthand-expressible",
                f"shorthand {alt.shorthand!r} covers this chord with fewer extensions: {serialize_chord(alt, tables, check=False)}",
            ))
    return result


def _raise_for(result: ValidationResult, label: str) -> None:
    for v in result.errors:
        raise _ERRORS.get(v.code, InvalidChord)(f"{label}: {v.message}")


# --- parse / serialize ---------------------------------------------------------

def parse_chord(text: str, tables: ChordTables | None = None, *, check: bool = True) -> HarteChord:
    """Parse and validate a chord label.

    ``check=False`` only parses the syntax, so labels breaking the
    shorthand rule (``"C:maj(7)"``) can still be read and canonicalised.

    >>> parse_chord("C:7(b9)").extensions
    (Extension(degree=9, accidentals='b', removal=False),)
    """
    if not text or any(ch.isspace() for ch in text):
        raise ChordSyntaxError(f"chord label must be non-empty and whitespace-free: {text!r}")
    m = _CHORD_RE.fullmatch(text)
    if m is None:
        raise ChordSyntaxError(f"malformed chord label {text!r}")
    exts: tuple[Extension, ...] = ()
    if m["extensions"] is not None:
        if not m["extensions"]:
            raise ChordSyntaxError(f"empty extension list in {text!r}")
        exts = tuple(Extension.parse(part) for part in m["extensions"].split(","))
    bass = m["bass"]
    if bass is not None and not _DEGREE_RE.fullmatch(bass):
        raise ChordSyntaxError(f"malformed bass degree in {text!r}")
    chord = HarteChord(m["root"], m["shorthand"], exts, bass)
    if check:
        _raise_for(validate_chord(chord, tables), text)
    return chord


def serialize_chord(chord: HarteChord, tables: ChordTables | None = None, *, check: bool = True) -> str:
    if check:
        result = validate_chord(chord, tables)
        if not result.ok:
            raise InvalidChord("; ".join(v.message for v in result.errors))
    out = f"{chord.root}:{chord.shorthand}"
    if chord.extensions:
        out += "(" + ",".join(map(str, chord.extensions)) + ")"
    if chord.bass is not None:
        out += "/" + chord.bass
    return out


# --- surface symbols and equivalence -----------------------------------------------

def normalize_surface(
    symbol: SurfaceSymbol | str,
    root: str,
    tables: ChordTables | None = None,
) -> HarteChord:
    """Map a written chord quality (``"Δ7"``, ``"-"``, ``"mi7"``...) to its canonical chord.

    Canonical quality strings such as ``"maj7"`` or ``"7(b9)"`` map to themselves.
    """
    tables = tables or default_tables()
    text = symbol.text if isinstance(symbol, SurfaceSymbol) else symbol
    if not _ROOT_RE.fullmatch(root):
        raise ChordSyntaxError(f"bad root spelling {root!r}")
    quality = tables.aliases.get(text, text)
    try:
        chord = parse_chord(f"{root}:{quality}", tables, check=False)
        result = validate_chord(chord, tables)
        result.violations = [v for v in result.violations if v.code != "shorthand-expressible"]
        _raise_for(result, f"{root}:{quality}")
    except HarteError:
        if text in tables.aliases:
            raise
        raise UnknownSurfaceSymbol(f"no alias for chord symbol {text!r}") from None
    return canonicalize(chord, tables)


def _canonical_bass(bass: str | None) -> str | None:
    if bass is None or parse_degree(bass) == (1, 0):
        return None
    return bass


def chords_equivalent(a: HarteChord, b: HarteChord, tables: ChordTables | None = None) -> bool:
    """Same root spelling, same degree set, same bass (``/1`` counts as no bass).

    Enharmonic roots (``C#`` vs ``Db``) are not equivalent.
    """
    if a.root != b.root:
        return False
    ba, bb = _canonical_bass(a.bass), _canonical_bass(b.bass)
    if (ba and parse_degree(ba)) != (bb and parse_degree(bb)):
        return False
    return degree_set(a, tables) == degree_set(b, tables)


def interval_between(root: str, other: str) -> str:
    """Scale degree of pitch ``other`` above ``root``: ``("C", "Bb") -> "b7"``.

    Both arguments are Harte pitch spellings (letter plus ``#``/``b``).
    """
    for p in (root, other):
        if not _ROOT_RE.fullmatch(p):
            raise ChordSyntaxError(f"bad pitch spelling {p!r}")
    steps = (_LETTERS.index(other[0]) - _LETTERS.index(root[0])) % 7

    def pc(p: str) -> int:
        return _LETTER_PC[p[0]] + p.count("#") - p.count("b")

    alter = (pc(other) - pc(root) - _MAJOR_SCALE[steps]) % 12
    if alter > 6:
        alter -= 12
    return format_degree((steps + 1, alter))
