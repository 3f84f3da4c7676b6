"""Regenerate the bundled lead-sheet corpus: ``python tests/fixtures/make_corpus.py``.

Pieces are synthetic but follow lead-sheet conventions: one chord per one or
two beats, beamed eighth pairs, ties across barlines, a system break every
four measures.
"""

import random
from pathlib import Path

OUT = Path(__file__).parent / "corpus"
N_PIECES = 24

KEYS = {0: "*k[]", 1: "*k[f#]", -1: "*k[b-]", -2: "*k[b-e-]", -3: "*k[b-e-a-]", 2: "*k[f#c#]", -4: "*k[b-e-a-d-]"}
ROOTS = ["C", "Db", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B"]
QUALITIES = ["maj7", "min7", "7", "maj6", "min6", "hdim7", "dim7", "7(b9)", "9", "min9", "maj9", "13",
             "7(#11)", "7(b13)", "sus4", "7(#9)", "min7(11)", "maj7(#11)", "aug", "min", "maj", "minmaj7",
             "maj(no5,b9)", "13(b9)", "min11", "7(b9,b13)", "aug7", "maj6(9)"]
BASSES = ["3", "5", "b7"]
STEPS = "cdefgab"


def pitch(rng: random.Random) -> str:
    step = rng.choice(STEPS)
    octave = rng.choice([4, 4, 4, 5, 5, 3])
    letters = step * (octave - 3) if octave >= 4 else step.upper() * (4 - octave)
    return letters + rng.choice(["", "", "", "", "#", "-", "n"])


def chord(rng: random.Random) -> str:
    label = f"{rng.choice(ROOTS)}:{rng.choice(QUALITIES)}"
    if rng.random() < 0.08:
        label += "/" + rng.choice(BASSES)
    return label


def measure(rng: random.Random, beats: int, tie_in: str | None) -> tuple[list[tuple[str, str]], str | None]:
    """Rows of one measure; returns the pitch tied into the next bar, if any."""
    rows = []
    beat = 0
    if tie_in:
        rows.append((f"4{tie_in}]", chord(rng)))
        beat = 1
    chord_beats = {0} | ({2} if beats == 4 and rng.random() < 0.5 else set())
    while beat < beats:
        left = beats - beat
        shape = rng.choice(["q", "q", "ee", "h", "dq", "r", "trip"] if left >= 2 else ["q", "ee", "r"])
        label = chord(rng) if beat in chord_beats else "."
        if shape == "h" and left >= 2:
            toks, used = [f"2{pitch(rng)}"], 2
        elif shape == "dq" and left >= 2:
            toks, used = [f"4.{pitch(rng)}", f"8{pitch(rng)}"], 2
        elif shape == "ee":
            toks, used = [f"8{pitch(rng)}L", f"8{pitch(rng)}J"], 1
        elif shape == "trip":
            toks, used = [f"12{pitch(rng)}L", f"12{pitch(rng)}", f"12{pitch(rng)}J"], 1
        elif shape == "r":
            toks, used = ["4r"], 1
        else:
            toks, used = [f"4{pitch(rng)}"], 1
        rows.append((toks[0], label))
        rows.extend((t, ".") for t in toks[1:])
        beat += used
    last = rows[-1][0]
    if last.startswith("4") and last[1:].isalpha() or (last.startswith("4") and last[1:-1].isalpha() and last[-1] in "#-n"):
        if rng.random() < 0.15:
            rows[-1] = ("[" + last, rows[-1][1])
            return rows, last[1:]
    return rows, None


def piece(n: int) -> str:
    rng = random.Random(1000 + n)
    beats = rng.choice([4, 4, 4, 3])
    fifths = rng.choice(list(KEYS))
    lines = [f"!!!OTL: Study {n:02d}", "**kern\t**harte", "*clefG2\t*clefG2", f"{KEYS[fifths]}\t{KEYS[fifths]}",
             f"*M{beats}/4\t*M{beats}/4"]
    n_measures = rng.choice([8, 12, 16])
    tie = None
    for m in range(1, n_measures + 1):
        if m > 1:
            lines.append(f"={m}\t={m}")
            if (m - 1) % 4 == 0:
                lines.append("!!linebreak:original")
        rows, tie = measure(rng, beats, tie)
        lines.extend(f"{mel}\t{ch}" for mel, ch in rows)
    if tie:  # the last note opens no tie
        mel, ch = lines[-1].split("\t")
        lines[-1] = f"{mel.lstrip('[')}\t{ch}"
    lines += ["==\t==", "*-\t*-"]
    return "\n".join(lines) + "\n"


def main() -> None:
    OUT.mkdir(exist_ok=True)
    for n in range(N_PIECES):
        (OUT / f"study_{n:02d}.krn").write_text(piece(n), encoding="utf-8")


if __name__ == "__main__":
    main()
