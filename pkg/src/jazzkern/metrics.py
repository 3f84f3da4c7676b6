"""Edit-distance OMR metrics: character, word and line error rates.

Texts are compared after line-ending normalisation (CRLF/CR become LF and
trailing newlines are dropped). Characters are extended grapheme clusters,
words are maximal runs of non-whitespace, lines are whole lines compared
exactly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np
import regex
from numba import njit

__all__ = [
    "EditResult",
    "GranularityScore",
    "EditReport",
    "EmptyReference",
    "edit_distance",
    "trie_distances",
    "normalize_text",
    "characters",
    "words",
    "lines",
    "cer",
    "wer",
    "ler",
    "pair_report",
    "corpus_report",
    "aligned_diff",
]

GRANULARITIES = ("char", "word", "line")


class EmptyReference(ValueError):
    pass


@dataclass(frozen=True)
class EditResult:
    distance: int
    substitutions: int
    insertions: int
    deletions: int
    # (op, ref_index, hyp_index); op in {"=", "S", "I", "D"}; absent index is None
    alignment: tuple[tuple[str, int | None, int | None], ...] | None = None


# Column cells hold (distance, substitutions, insertions, deletions) of one
# optimal alignment of ref[:i] against the hypothesis prefix seen so far.
# Ties prefer match/substitution, then deletion, then insertion.
@njit(cache=True)
def _advance(ref, prev, sym, cur):
    cur[0, 0] = prev[0, 0] + 1
    cur[0, 1] = prev[0, 1]
    cur[0, 2] = prev[0, 2] + 1
    cur[0, 3] = prev[0, 3]
    for i in range(1, ref.shape[0] + 1):
        d = prev[i - 1, 0]
        s = prev[i - 1, 1]
        if ref[i - 1] != sym:
            d += 1
            s += 1
        ins = prev[i - 1, 2]
        dl = prev[i - 1, 3]
        if cur[i - 1, 0] + 1 < d:
            d, s, ins, dl = cur[i - 1, 0] + 1, cur[i - 1, 1], cur[i - 1, 2], cur[i - 1, 3] + 1
        if prev[i, 0] + 1 < d:
            d, s, ins, dl = prev[i, 0] + 1, prev[i, 1], prev[i, 2] + 1, prev[i, 3]
        cur[i, 0] = d
        cur[i, 1] = s
        cur[i, 2] = ins
        cur[i, 3] = dl


@njit(cache=True)
def _initial_column(n, col):
    for i in range(n + 1):
        col[i, 0] = i
        col[i, 1] = 0
        col[i, 2] = 0
        col[i, 3] = i


@njit(cache=True)
def _fold(ref, hyp):
    n = ref.shape[0]
    prev = np.empty((n + 1, 4), np.int64)
    cur = np.empty((n + 1, 4), np.int64)
    _initial_column(n, prev)
    for j in range(hyp.shape[0]):
        _advance(ref, prev, hyp[j], cur)
        prev, cur = cur, prev
    return prev[n].copy()


@njit(cache=True)
def _trie_fold(ref, parent, symbol, out):
    n = ref.shape[0]
    cols = np.empty((parent.shape[0], n + 1, 4), np.int64)
    _initial_column(n, cols[0])
    out[0] = n
    for v in range(1, parent.shape[0]):
        _advance(ref, cols[parent[v]], symbol[v], cols[v])
        out[v] = cols[v, n, 0]


def trie_distances(ref: Sequence[int], parent: Sequence[int], symbol: Sequence[int]) -> np.ndarray:
    """Distances from ``ref`` to every node of a hypothesis prefix trie.

    Node 0 is the empty hypothesis; node ``v > 0`` extends node ``parent[v]``
    (with ``parent[v] < v``) by ``symbol[v]``. Each node costs one column
    update, so scoring many hypotheses that share prefixes is cheap.
    """
    parent = np.asarray(parent, dtype=np.int64)
    if len(parent) == 0 or np.any(parent[1:] >= np.arange(1, len(parent))):
        raise ValueError("parent[v] must precede v and node 0 must exist")
    out = np.empty(len(parent), dtype=np.int64)
    _trie_fold(np.asarray(ref, dtype=np.int64), parent, np.asarray(symbol, dtype=np.int64), out)
    return out


def _as_ids(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> tuple[np.ndarray, np.ndarray]:
    ids: dict[Hashable, int] = {}
    r = np.fromiter((ids.setdefault(x, len(ids)) for x in ref), dtype=np.int64, count=len(ref))
    h = np.fromiter((ids.setdefault(x, len(ids)) for x in hyp), dtype=np.int64, count=len(hyp))
    return r, h


def edit_distance(ref: Sequence[Hashable], hyp: Sequence[Hashable], *, trace: bool = False) -> EditResult:
    """Unit-cost Levenshtein distance from ``hyp`` to ``ref``.

    Counts are those of one optimal alignment; ties prefer a match or
    substitution, then a deletion, then an insertion. ``trace=True`` keeps the
    full table and returns the alignment as well.
    """
    n, m = len(ref), len(hyp)
    if not trace:
        d, s, ins, dl = _fold(*_as_ids(ref, hyp))
        return EditResult(int(d), int(s), int(ins), int(dl))

    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        table[i][0] = i
    for j in range(m + 1):
        table[0][j] = j
    for i in range(1, n + 1):
        row, above = table[i], table[i - 1]
        for j in range(1, m + 1):
            row[j] = min(
                above[j - 1] + (ref[i - 1] != hyp[j - 1]),
                above[j] + 1,
                row[j - 1] + 1,
            )
    ops = []
    i, j = n, m
    while i or j:
        if i and j and table[i][j] == table[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            ops.append(("=" if ref[i - 1] == hyp[j - 1] else "S", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i and table[i][j] == table[i - 1][j] + 1:
            ops.append(("D", i - 1, None))
            i -= 1
        else:
            ops.append(("I", None, j - 1))
            j -= 1
    ops.reverse()
    count = {op: sum(1 for o in ops if o[0] == op) for op in "SID"}
    return EditResult(table[n][m], count["S"], count["I"], count["D"], tuple(ops))


def normalize_text(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n").rstrip("\n")


def characters(text: str) -> list[str]:
    return regex.findall(r"\X", normalize_text(text))


def words(text: str) -> list[str]:
    return normalize_text(text).split()


def lines(text: str) -> list[str]:
    text = normalize_text(text)
    return text.split("\n") if text else []


_UNITS = {"char": characters, "word": words, "line": lines}


@dataclass(frozen=True)
class GranularityScore:
    edits: int
    substitutions: int
    insertions: int
    deletions: int
    ref_length: int
    rate: float

    @classmethod
    def of(cls, result: EditResult, ref_length: int) -> "GranularityScore":
        return cls(result.distance, result.substitutions, result.insertions, result.deletions,
                   ref_length, result.distance / ref_length)


def _score(ref: str, hyp: str, granularity: str) -> GranularityScore:
    units = _UNITS[granularity]
    r = units(ref)
    if not r:
        raise EmptyReference(f"reference has no {granularity}s")
    return GranularityScore.of(edit_distance(r, units(hyp)), len(r))


def cer(ref: str, hyp: str) -> float:
    return _score(ref, hyp, "char").rate


def wer(ref: str, hyp: str) -> float:
    return _score(ref, hyp, "word").rate


def ler(ref: str, hyp: str) -> float:
    """Line error rate: a line counts as one error whenever any character differs."""
    return _score(ref, hyp, "line").rate


@dataclass
class EditReport:
    char: GranularityScore
    word: GranularityScore
    line: GranularityScore
    pairs: list["EditReport"] = field(default_factory=list)
    label: str | None = None

    @property
    def cer(self) -> float:
        return self.char.rate

    @property
    def wer(self) -> float:
        return self.word.rate

    @property
    def ler(self) -> float:
        return self.line.rate

    def summary(self) -> dict[str, float]:
        return {"cer": self.cer, "wer": self.wer, "ler": self.ler}

    def to_dict(self) -> dict:
        out: dict = {"label": self.label} if self.label is not None else {}
        out.update(self.summary())
        out["counts"] = {g: asdict(getattr(self, g)) for g in GRANULARITIES}
        if self.pairs:
            out["pairs"] = [p.to_dict() for p in self.pairs]
        return out


def pair_report(ref: str, hyp: str, label: str | None = None) -> EditReport:
    return EditReport(*(_score(ref, hyp, g) for g in GRANULARITIES), label=label)


def corpus_report(
    pairs: Iterable[tuple[str, str]],
    *,
    average: str = "micro",
    labels: Sequence[str] | None = None,
) -> EditReport:
    """Score every (reference, hypothesis) pair and aggregate.

    ``micro`` divides total edits by total reference length per granularity;
    ``macro`` averages the per-pair rates. Raw counts are summed either way.
    """
    if average not in ("micro", "macro"):
        raise ValueError(f"average must be 'micro' or 'macro', not {average!r}")
    reports = []
    for n, (ref, hyp) in enumerate(pairs):
        label = labels[n] if labels is not None else None
        try:
            reports.append(pair_report(ref, hyp, label))
        except EmptyReference as exc:
            raise EmptyReference(f"pair {n}{f' ({label})' if label else ''}: {exc}") from exc
    if not reports:
        raise EmptyReference("no pairs to score")

    totals = []
    for g in GRANULARITIES:
        scores = [getattr(r, g) for r in reports]
        edits = sum(s.edits for s in scores)
        length = sum(s.ref_length for s in scores)
        rate = edits / length if average == "micro" else sum(s.rate for s in scores) / len(scores)
        totals.append(GranularityScore(
            edits,
            sum(s.substitutions for s in scores),
            sum(s.insertions for s in scores),
            sum(s.deletions for s in scores),
            length,
            rate,
        ))
    return EditReport(*totals, pairs=reports)


def aligned_diff(ref: str, hyp: str) -> str:
    """Line-level alignment: ``' '`` equal, ``'~'`` substituted, ``'-'`` missing, ``'+'`` extra."""
    r, h = lines(ref), lines(hyp)
    out = []
    for op, i, j in edit_distance(r, h, trace=True).alignment or ():
        if op == "=":
            out.append(f"  {r[i]}")
        elif op == "S":
            out.append(f"~ {r[i]}\n  -> {h[j]}")
        elif op == "D":
            out.append(f"- {r[i]}")
        else:
            out.append(f"+ {h[j]}")
    return "\n".join(out)
