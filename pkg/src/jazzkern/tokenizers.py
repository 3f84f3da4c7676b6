"""Word-, character- and medium-level tokenisers for two-spine kern text.

All three strategies share the same framing: every field is turned into zero
or more tokens, the field boundary becomes :data:`TAB` and every line ends
with :data:`NEWLINE`. Since each strategy only cuts fields into contiguous
pieces, :func:`detokenize` is the same for all of them.

Medium level keeps interpretation, barline and comment fields whole, splits
melody fields into pitch (``"ee"``), duration (``"16"``) and one token per
remaining character, and cuts chord fields at ``: ( , ) /`` so that root,
shorthand, every extension and the bass are separate tokens.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from . import kern

__all__ = [
    "Strategy",
    "TokenStream",
    "Vocabulary",
    "BOS",
    "EOS",
    "PAD",
    "TAB",
    "NEWLINE",
    "UNK",
    "SPECIALS",
    "TokenizeError",
    "MalformedStream",
    "OutOfVocabulary",
    "OutOfRangeId",
    "tokenize",
    "detokenize",
    "build_vocabulary",
    "encode",
    "decode",
    "medium_melody_tokens",
    "medium_chord_tokens",
]

PAD = "<pad>"
BOS = "<bos>"
EOS = "<eos>"
TAB = "<t>"
NEWLINE = "<b>"
UNK = "<unk>"
SPECIALS: tuple[str, ...] = (PAD, BOS, EOS, TAB, NEWLINE)


class Strategy(str, Enum):
    WORD = "word"
    CHAR = "char"
    MEDIUM = "medium"


class TokenizeError(ValueError):
    pass


class MalformedStream(ValueError):
    pass


class OutOfVocabulary(KeyError):
    def __init__(self, token: str, position: int):
        self.token, self.position = token, position
        super().__init__(f"token {token!r} at position {position} is not in the vocabulary")

    def __str__(self) -> str:
        return self.args[0]


class OutOfRangeId(IndexError):
    pass


@dataclass(frozen=True)
class TokenStream:
    tokens: tuple[str, ...]
    strategy: Strategy

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "strategy", Strategy(self.strategy))

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def to_json(self) -> str:
        return json.dumps({"strategy": self.strategy.value, "tokens": list(self.tokens)}, ensure_ascii=False)

    def to_text(self) -> str:
        """Space-separated tokens; backslash, space, tab and newline are escaped."""
        return " ".join(_escape(t) for t in self.tokens)

    @classmethod
    def from_text(cls, text: str, strategy: Strategy | str) -> "TokenStream":
        return cls(tuple(_unescape(t) for t in text.split(" ")) if text else (), Strategy(strategy))


_ESCAPES = {"\\": "\\\\", " ": "\\s", "\t": "\\t", "\n": "\\n"}
_UNESCAPES = {v: k for k, v in _ESCAPES.items()}


def _escape(token: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in token)


def _unescape(token: str) -> str:
    return re.sub(r"\\[\\stn]", lambda m: _UNESCAPES[m.group()], token)


# --- field splitting -------------------------------------------------------------

_MELODY_PIECE = re.compile(r"([a-gA-G])\1*|rr?|\d+|.", re.S)
_CHORD_SEPARATORS = re.compile(r"([:(),/])")


def medium_melody_tokens(field: str) -> list[str]:
    """``"8ee#L" -> ["8", "ee", "#", "L"]``."""
    return [m.group() for m in _MELODY_PIECE.finditer(field)]


def medium_chord_tokens(field: str) -> list[str]:
    """``"C:7(b9)" -> ["C", ":", "7", "(", "b9", ")"]``."""
    return [piece for piece in _CHORD_SEPARATORS.split(field) if piece]


def _is_data_line(fields: Sequence[str]) -> bool:
    return bool(fields) and not fields[0].startswith(("*", "=", "!"))


def _split_fields(fields: Sequence[str], strategy: Strategy) -> list[list[str]]:
    if strategy is Strategy.WORD:
        return [[f] if f else [] for f in fields]
    if strategy is Strategy.CHAR:
        return [list(f) for f in fields]
    if not _is_data_line(fields):
        return [[f] if f else [] for f in fields]
    out = [medium_melody_tokens(fields[0])]
    out.extend(medium_chord_tokens(f) for f in fields[1:])
    return out


def tokenize(text: str, strategy: Strategy | str, *, check: bool = True) -> TokenStream:
    """Turn kern text into a token stream.

    With ``check`` the text must parse as a valid document first; pass
    ``check=False`` to tokenise fragments such as single records.
    """
    strategy = Strategy(strategy)
    if check:
        try:
            kern.parse_kern(text)
        except kern.KernError as exc:
            raise TokenizeError(str(exc)) from exc
    text = text.replace("\r\n", "\n")
    lines = text.split("\n")
    last_terminated = lines[-1] == ""
    if last_terminated:
        lines.pop()
    tokens: list[str] = []
    for i, line in enumerate(lines):
        for j, pieces in enumerate(_split_fields(line.split("\t"), strategy)):
            if j:
                tokens.append(TAB)
            tokens.extend(pieces)
        if i < len(lines) - 1 or last_terminated:
            tokens.append(NEWLINE)
    return TokenStream(tuple(tokens), strategy)


def detokenize(stream: TokenStream | Sequence[str]) -> str:
    """Rebuild kern text from tokens; BOS/EOS framing and trailing padding are ignored."""
    tokens = list(stream.tokens if isinstance(stream, TokenStream) else stream)
    if tokens and tokens[0] == BOS:
        tokens.pop(0)
    while tokens and tokens[-1] == PAD:
        tokens.pop()
    if tokens and tokens[-1] == EOS:
        tokens.pop()
    out: list[str] = []
    fields: list[list[str]] = [[]]
    for pos, tok in enumerate(tokens):
        if tok == TAB:
            if len(fields) == 2:
                raise MalformedStream(f"third field started at position {pos}")
            fields.append([])
        elif tok == NEWLINE:
            out.append("\t".join("".join(f) for f in fields) + "\n")
            fields = [[]]
        elif tok in (BOS, EOS, PAD, UNK):
            raise MalformedStream(f"special token {tok!r} inside the stream at position {pos}")
        else:
            fields[-1].append(tok)
    if len(fields) > 1 or fields[0]:
        out.append("\t".join("".join(f) for f in fields))
    return "".join(out)


# --- vocabulary --------------------------------------------------------------------

@dataclass(frozen=True)
class Vocabulary:
    strategy: Strategy
    tokens: tuple[str, ...]
    specials: tuple[str, ...] = SPECIALS

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "specials", tuple(self.specials))
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        if tuple(self.tokens[: len(self.specials)]) != self.specials:
            raise ValueError("vocabulary must start with its special tokens")
        object.__setattr__(self, "_ids", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id_of(self, token: str) -> int:
        return self._ids[token]

    def token_of(self, idx: int) -> str:
        return self.tokens[idx]

    @property
    def symbols(self) -> tuple[str, ...]:
        """Non-special tokens."""
        return self.tokens[len(self.specials):]

    def to_json(self) -> str:
        return json.dumps(
            {"strategy": self.strategy.value, "specials": list(self.specials), "tokens": list(self.tokens)},
            ensure_ascii=False,
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        data = json.loads(text)
        return cls(Strategy(data["strategy"]), tuple(data["tokens"]), tuple(data["specials"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def build_vocabulary(
    corpus: Iterable[str | Path | tuple[str, str]],
    strategy: Strategy | str,
    *,
    with_unk: bool = False,
) -> Vocabulary:
    """Collect the token set of a corpus. Specials come first, then tokens sorted.

    Corpus items may be kern text, paths to kern files, or ``(name, text)`` pairs.
    """
    strategy = Strategy(strategy)
    specials = SPECIALS + ((UNK,) if with_unk else ())
    seen: set[str] = set()
    for n, item in enumerate(corpus):
        if isinstance(item, Path):
            name, text = str(item), item.read_text(encoding="utf-8")
        elif isinstance(item, tuple):
            name, text = item
        else:
            name, text = f"document {n}", item
        try:
            seen.update(tokenize(text, strategy).tokens)
        except TokenizeError as exc:
            raise TokenizeError(f"{name}: {exc}") from exc
    return Vocabulary(strategy, specials + tuple(sorted(seen - set(specials))), specials)


def encode(stream: TokenStream, vocab: Vocabulary, *, framing: bool = False, unk: bool = False) -> list[int]:
    if stream.strategy is not vocab.strategy:
        raise ValueError(f"{stream.strategy.value} stream cannot use a {vocab.strategy.value} vocabulary")
    ids = [vocab.id_of(BOS)] if framing else []
    for pos, tok in enumerate(stream.tokens):
        if tok in vocab:
            ids.append(vocab.id_of(tok))
        elif unk and UNK in vocab:
            ids.append(vocab.id_of(UNK))
        else:
            raise OutOfVocabulary(tok, pos)
    if framing:
        ids.append(vocab.id_of(EOS))
    return ids


def decode(ids: Sequence[int], vocab: Vocabulary) -> TokenStream:
    """Inverse of :func:`encode`; a leading BOS and a trailing EOS (plus padding) are dropped."""
    tokens = []
    for pos, idx in enumerate(ids):
        if not 0 <= idx < len(vocab):
            raise OutOfRangeId(f"id {idx} at position {pos} outside [0, {len(vocab)})")
        tokens.append(vocab.token_of(idx))
    if tokens and tokens[0] == BOS:
        tokens.pop(0)
    while tokens and tokens[-1] == PAD:
        tokens.pop()
    if tokens and tokens[-1] == EOS:
        tokens.pop()
    return TokenStream(tuple(tokens), vocab.strategy)
