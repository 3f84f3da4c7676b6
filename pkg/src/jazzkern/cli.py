"""``jazzkern`` command line: JSON on stdout, diagnostics on stderr.

Exit status is 0 on success, 1 when any input failed and 2 on usage errors.
Batch commands take files, directories and glob patterns, process them
concurrently up to ``--jobs`` and report results sorted by path.
"""

from __future__ import annotations

import argparse
import glob
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from . import dataset, harte, kern, metrics, mxl_convert, tokenizers

KERN_SUFFIXES = (".krn",)
MUSICXML_SUFFIXES = (".xml", ".musicxml", ".mxl")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
STDIN = "-"


class CommandError(Exception):
    """Failure of one input; ``where`` names the file (and line when known)."""

    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")


@dataclass
class Outcome:
    where: str
    payload: object = None
    error: str | None = None


def _emit(payload, pretty: bool = False) -> None:
    if pretty and isinstance(payload, str):
        sys.stdout.write(payload if payload.endswith("\n") else payload + "\n")
        return
    json.dump(payload, sys.stdout, ensure_ascii=False, indent=2 if pretty else None, sort_keys=False)
    sys.stdout.write("\n")


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def expand_inputs(items: Sequence[str], suffixes: tuple[str, ...]) -> list[str]:
    """Files, directories (recursive, filtered by suffix) and glob patterns, sorted."""
    out: set[str] = set()
    for item in items:
        if item == STDIN:
            return [STDIN]
        path = Path(item)
        if path.is_dir():
            out.update(str(p) for p in path.rglob("*") if p.is_file() and p.suffix.lower() in suffixes)
        elif any(ch in item for ch in "*?["):
            out.update(p for p in glob.glob(item, recursive=True) if Path(p).is_file())
        else:
            out.add(item)
    return sorted(out)


def _read(where: str) -> str:
    if where == STDIN:
        return sys.stdin.read()
    try:
        return Path(where).read_text(encoding="utf-8")
    except OSError as exc:
        raise CommandError(where, exc.strerror or str(exc)) from None


def _batch(items: Sequence[str], work: Callable[[str], object], jobs: int) -> list[Outcome]:
    def run(where: str) -> Outcome:
        try:
            return Outcome(where, work(where))
        except CommandError as exc:
            return Outcome(where, error=str(exc))
        except (ValueError, KeyError, IndexError, OSError) as exc:
            return Outcome(where, error=f"{where}: {exc}")

    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, items))
    return [run(w) for w in items]


def _finish(outcomes: list[Outcome], payload, pretty: bool = False) -> int:
    failed = [o for o in outcomes if o.error]
    for o in failed:
        _err(o.error)
    if payload is not None:
        _emit(payload, pretty)
    if failed and len(outcomes) > 1:
        _err(f"{len(failed)} of {len(outcomes)} inputs failed")
    return 1 if failed else 0


def _single_or_list(outcomes: list[Outcome]):
    good = [o.payload for o in outcomes if not o.error]
    if len(outcomes) == 1:
        return good[0] if good else None
    return good


# --- chord ----------------------------------------------------------------------------

_ROOT_PREFIX = re.compile(r"[A-G](?:#+|b+)?")


def _chord_items(args) -> list[str]:
    return args.labels if args.labels != [STDIN] else [l for l in sys.stdin.read().split() if l]


def cmd_chord(args) -> int:
    tables = harte.load_tables(args.config) if args.config else harte.default_tables()
    results, failures = [], 0
    for label in _chord_items(args):
        try:
            if args.action == "parse":
                results.append(harte.parse_chord(label, tables).to_dict())
            elif args.action == "validate":
                try:
                    chord = harte.parse_chord(label, tables)
                    result = harte.validate_chord(chord, tables)
                    violations = [v.__dict__ for v in result.violations]
                    ok = result.ok
                except harte.HarteError as exc:
                    violations = [{"code": type(exc).__name__, "message": str(exc), "severity": "error"}]
                    ok = False
                results.append({"label": label, "ok": ok, "violations": violations})
                if not ok:
                    failures += 1
                    msg = "; ".join(v["message"] for v in violations)
                    _err(msg if msg.startswith(label) else f"{label}: {msg}")
            else:
                root = args.root
                symbol = label
                if root is None:
                    m = _ROOT_PREFIX.match(label)
                    if not m:
                        raise harte.ChordSyntaxError(f"no root in {label!r}; pass --root")
                    root, symbol = m.group(), label[m.end():]
                chord = harte.normalize_surface(symbol, root, tables)
                results.append({"symbol": label, "chord": harte.serialize_chord(chord, tables)})
        except harte.HarteError as exc:
            failures += 1
            _err(str(exc) if str(exc).startswith(label) else f"{label}: {exc}")
    _emit(results[0] if len(results) == 1 and len(args.labels) == 1 else results, args.pretty)
    return 1 if failures else 0


# --- kern -------------------------------------------------------------------------------

def _doc_json(where: str, doc: kern.KernDocument) -> dict:
    return {
        "path": where,
        "metadata": list(doc.metadata),
        "measures": kern.measure_count(doc),
        "chords": doc.chords,
        "lines": [{"kind": l.kind.value, "fields": list(l.fields)} for l in doc.lines],
        "text": kern.serialize_kern(doc),
    }


def _kern_from_input(where: str, strict: bool = True) -> kern.KernDocument:
    """Kern text, or the JSON written by ``kern parse`` (its ``text`` field)."""
    text = _read(where)
    if text.lstrip().startswith("{"):
        try:
            text = json.loads(text)["text"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CommandError(where, f"not kern text nor parsed-kern JSON ({exc})") from None
    try:
        return kern.parse_kern(text, strict=strict)
    except kern.KernError as exc:
        raise CommandError(where, str(exc)) from None


def cmd_kern(args) -> int:
    items = expand_inputs(args.inputs, KERN_SUFFIXES)
    if args.action == "parse":
        outcomes = _batch(items, lambda w: _doc_json(w, _kern_from_input(w, not args.lenient)), args.jobs)
        return _finish(outcomes, _single_or_list(outcomes), args.pretty)

    if args.action == "validate":
        def check(where: str):
            doc = _kern_from_input(where, strict=False)
            diags = kern.validate_document(doc)
            errors = [d for d in diags if d.severity == "error"]
            return {"path": where, "ok": not errors, "diagnostics": [d.to_dict() for d in diags]}

        outcomes = _batch(items, check, args.jobs)
        payload = [o.payload for o in outcomes if not o.error]
        for p in payload:
            for d in p["diagnostics"]:
                where = f"{p['path']}:{d['line']}" if d["line"] is not None else p["path"]
                _err(f"{where}: {d['severity']}: {d['message']} [{d['code']}]")
        code = _finish(outcomes, payload if len(items) != 1 else (payload[0] if payload else None), args.pretty)
        return 1 if code or any(not p["ok"] for p in payload) else 0

    if args.action == "regions":
        def regions(where: str):
            doc = _kern_from_input(where)
            parts = kern.split_regions(doc, include_context=not args.no_context)
            stem = Path(where).stem if where != STDIN else "stdin"
            written = []
            for i, part in enumerate(parts):
                text = kern.serialize_kern(part)
                if args.out:
                    out = Path(args.out) / f"{stem}_{i:02d}.krn"
                    out.parent.mkdir(parents=True, exist_ok=True)
                    out.write_text(text, encoding="utf-8")
                    written.append({"staff": i, "path": str(out)})
                else:
                    written.append({"staff": i, "text": text})
            return {"path": where, "regions": written}

        outcomes = _batch(items, regions, args.jobs)
        return _finish(outcomes, _single_or_list(outcomes), args.pretty)

    # strip
    def strip(where: str):
        doc = kern.strip_annotations(_kern_from_input(where), keep_linebreaks=not args.drop_linebreaks)
        text = kern.serialize_kern(doc)
        if args.out:
            out = Path(args.out) / Path(where).name
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(text, encoding="utf-8")
            return {"path": where, "output": str(out)}
        return {"path": where, "text": text}

    outcomes = _batch(items, strip, args.jobs)
    return _finish(outcomes, _single_or_list(outcomes), args.pretty)


# --- tokens --------------------------------------------------------------------------

def cmd_tok(args) -> int:
    vocab = tokenizers.Vocabulary.load(args.vocab) if getattr(args, "vocab", None) else None
    if args.action == "vocab":
        items = expand_inputs(args.inputs, KERN_SUFFIXES)
        try:
            corpus = [(w, kern.serialize_kern(_kern_from_input(w))) for w in items]
            built = tokenizers.build_vocabulary(corpus, args.strategy, with_unk=args.unk)
        except (CommandError, tokenizers.TokenizeError) as exc:
            _err(str(exc))
            return 1
        if args.out:
            built.save(args.out)
        _emit(json.loads(built.to_json()), args.pretty)
        return 0

    if args.action == "encode":
        strategy = vocab.strategy if vocab else tokenizers.Strategy(args.strategy)
        items = expand_inputs(args.inputs, KERN_SUFFIXES)

        def encode(where: str):
            text = kern.serialize_kern(_kern_from_input(where))
            stream = tokenizers.tokenize(text, strategy)
            out = {"path": where, "strategy": strategy.value, "tokens": list(stream.tokens)}
            if vocab is not None:
                try:
                    out["ids"] = tokenizers.encode(stream, vocab, framing=args.framing, unk=args.unk)
                except tokenizers.OutOfVocabulary as exc:
                    raise CommandError(where, str(exc)) from None
            return out

        outcomes = _batch(items, encode, args.jobs)
        return _finish(outcomes, _single_or_list(outcomes), args.pretty)

    # decode: JSON objects with "tokens" or "ids" (one object, or a list of them)
    raw = _read(args.input)
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        _err(f"{args.input}: invalid JSON ({exc})")
        return 1
    records = data if isinstance(data, list) else [data]
    results, failed = [], 0
    for n, rec in enumerate(records):
        where = rec.get("path", f"{args.input}[{n}]") if isinstance(rec, dict) else f"{args.input}[{n}]"
        try:
            if isinstance(rec, dict) and "ids" in rec and vocab is not None:
                tokens = tokenizers.decode(rec["ids"], vocab).tokens
            elif isinstance(rec, dict) and "tokens" in rec:
                tokens = rec["tokens"]
            elif isinstance(rec, dict) and "ids" in rec:
                raise ValueError("decoding ids needs --vocab")
            else:
                raise ValueError("expected an object with 'tokens' or 'ids'")
            results.append({"path": where, "text": tokenizers.detokenize(tokens)})
        except (ValueError, IndexError) as exc:
            failed += 1
            _err(f"{where}: {exc}")
    if args.text:
        for r in results:
            sys.stdout.write(r["text"])
    else:
        _emit(results[0] if len(results) == 1 and not isinstance(data, list) else results, args.pretty)
    return 1 if failed else 0


# --- score ----------------------------------------------------------------------------------

def _pairs(ref: str, hyp: str) -> list[tuple[str, Path, Path]]:
    r, h = Path(ref), Path(hyp)
    if r.is_file() and h.is_file():
        return [(r.name, r, h)]
    if not (r.is_dir() and h.is_dir()):
        raise CommandError(f"{ref} / {hyp}", "--ref and --hyp must both be files or both be directories")
    refs = {p.relative_to(r).as_posix(): p for p in r.rglob("*") if p.is_file()}
    hyps = {p.relative_to(h).as_posix(): p for p in h.rglob("*") if p.is_file()}
    missing = sorted(set(refs) - set(hyps))
    if missing:
        raise CommandError(str(h), f"no hypothesis for {', '.join(missing[:5])}" + (" ..." if len(missing) > 5 else ""))
    return [(k, refs[k], h / k) for k in sorted(refs)]


def cmd_score(args) -> int:
    try:
        pairs = _pairs(args.ref, args.hyp)
        texts = [(_read(str(rp)), _read(str(hp))) for _, rp, hp in pairs]
        report = metrics.corpus_report(texts, average=args.average, labels=[k for k, _, _ in pairs])
    except (CommandError, metrics.EmptyReference) as exc:
        _err(str(exc))
        return 1
    if args.diff:
        for (name, _, _), (ref, hyp) in zip(pairs, texts):
            if ref != hyp:
                print(f"--- {name}", file=sys.stderr)
                print(metrics.aligned_diff(ref, hyp), file=sys.stderr)
    if args.pretty:
        rows = [("file", "CER", "WER", "LER")]
        rows += [(p.label, f"{p.cer:.4f}", f"{p.wer:.4f}", f"{p.ler:.4f}") for p in report.pairs]
        rows.append((f"{args.average} total", f"{report.cer:.4f}", f"{report.wer:.4f}", f"{report.ler:.4f}"))
        width = max(len(r[0]) for r in rows)
        _emit("\n".join(f"{r[0]:<{width}}  {r[1]:>7}  {r[2]:>7}  {r[3]:>7}" for r in rows), True)
    elif args.detail:
        _emit(report.to_dict())
    else:
        _emit(report.summary())
    return 0


# --- convert ---------------------------------------------------------------------------

def cmd_convert(args) -> int:
    if args.keep_lyrics != "no":
        _err("--keep-lyrics: only 'no' is supported")
        return 2
    items = expand_inputs(args.inputs, MUSICXML_SUFFIXES)

    def convert(where: str):
        source = sys.stdin.buffer.read() if where == STDIN else where
        try:
            conv = mxl_convert.convert_musicxml(source, top_voice=args.top_voice, strict_harmony=args.strict_harmony)
        except mxl_convert.ConversionError as exc:
            raise CommandError(where, str(exc)) from None
        except Exception as exc:  # malformed XML, broken zip containers
            if isinstance(exc, (OSError, ValueError)) or type(exc).__name__ in ("ParseError", "BadZipFile"):
                raise CommandError(where, f"{type(exc).__name__}: {exc}") from None
            raise
        for w in conv.warnings:
            _err(f"{where}: warning: {w}")
        text = kern.serialize_kern(conv.document)
        out = {"path": where, "harmonies": conv.harmony_count, "system_breaks": conv.system_breaks,
               "warnings": conv.warnings}
        if args.out:
            target = Path(args.out) / (Path(where).stem + ".krn")
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(text, encoding="utf-8")
            out["output"] = str(target)
        else:
            out["text"] = text
        return out

    outcomes = _batch(items, convert, args.jobs)
    if args.text and len(outcomes) == 1 and not outcomes[0].error and "text" in outcomes[0].payload:
        sys.stdout.write(outcomes[0].payload["text"])
        return 0
    return _finish(outcomes, _single_or_list(outcomes), args.pretty)


# --- dataset ----------------------------------------------------------------------------

def _ratios(text: str) -> tuple[float, float, float]:
    try:
        values = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratios {text!r}") from None
    if len(values) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated ratios")
    return values


def cmd_split(args) -> int:
    try:
        pieces = dataset.load_pieces(args.pieces)
        manifest = dataset.make_split(pieces, args.ratios, args.seed, strict=args.strict)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        _err(f"{args.pieces}: {exc}")
        return 1
    for w in manifest.warnings:
        _err(f"{args.pieces}: warning: {w}")
    text = manifest.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_regions(args) -> int:
    where = args.score
    try:
        doc = _kern_from_input(where)
        boxes = json.loads(Path(args.boxes).read_text(encoding="utf-8"))
        if isinstance(boxes, dict):
            boxes = boxes["boxes"]
        score_id = args.score_id or Path(where).stem
        page = tuple(args.page_size) if args.page_size else None
        records, regions = dataset.build_region_records(
            doc, boxes, score_id=score_id, image=args.image or f"{score_id}.jpg", page_size=page)
    except (CommandError, OSError, ValueError, KeyError) as exc:
        _err(f"{where}: {exc}" if not isinstance(exc, CommandError) else str(exc))
        return 1
    if args.out:
        dataset.write_regions(records, regions, args.out)
    _emit([r.to_dict() for r in records], args.pretty)
    return 0


def cmd_preprocess(args) -> int:
    items = expand_inputs(args.inputs, IMAGE_SUFFIXES)

    def prep(where: str):
        img = dataset.preprocess_image(where, binarize=args.binarize)
        out = {"path": where, "content_width": img.content_width, "content_height": img.content_height,
               "source_size": list(img.source_size)}
        if args.out:
            target = Path(args.out) / (Path(where).stem + ".png")
            target.parent.mkdir(parents=True, exist_ok=True)
            dataset.save_image(img, target)
            out["output"] = str(target)
        return out

    outcomes = _batch(items, prep, args.jobs)
    return _finish(outcomes, [o.payload for o in outcomes if not o.error], args.pretty)


# --- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--pretty", action="store_true", help="indented JSON or human-readable tables")
    common.add_argument("--jobs", "-j", type=int, default=1, help="concurrent workers for batch inputs")

    p = argparse.ArgumentParser(prog="jazzkern", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    chord = sub.add_parser("chord", help="parse, validate or normalise Harte chord labels", parents=[common])
    chord.add_argument("action", choices=["parse", "validate", "normalize"])
    chord.add_argument("labels", nargs="+", help="labels, or - to read whitespace-separated labels from stdin")
    chord.add_argument("--root", help="root for normalize when the symbol has none")
    chord.add_argument("--config", help=f"directory with shorthands.json/aliases.json (default ${harte.CONFIG_ENV})")
    chord.set_defaults(func=cmd_chord)

    k = sub.add_parser("kern", help="parse, validate, split or strip kern files", parents=[common])
    k.add_argument("action", choices=["parse", "validate", "regions", "strip"])
    k.add_argument("inputs", nargs="+", help="files, directories, globs, or - for stdin")
    k.add_argument("--out", help="output directory (regions, strip)")
    k.add_argument("--lenient", action="store_true", help="parse: skip token-level checks")
    k.add_argument("--no-context", action="store_true", help="regions: do not repeat header/clef/key/meter")
    k.add_argument("--drop-linebreaks", action="store_true", help="strip: remove linebreak markers as well")
    k.set_defaults(func=cmd_kern)

    tok = sub.add_parser("tok", help="tokenise kern text and manage vocabularies", parents=[common])
    tok_sub = tok.add_subparsers(dest="action", required=True)
    enc = tok_sub.add_parser("encode", help="kern (or `kern parse` JSON) to tokens/ids", parents=[common])
    enc.add_argument("inputs", nargs="+")
    enc.add_argument("--strategy", choices=[s.value for s in tokenizers.Strategy], default="medium")
    enc.add_argument("--vocab", help="vocabulary JSON; adds ids to the output")
    enc.add_argument("--framing", action="store_true", help="wrap ids in BOS/EOS")
    enc.add_argument("--unk", action="store_true", help="map unknown tokens to <unk> instead of failing")
    dec = tok_sub.add_parser("decode", help="tokens/ids JSON back to kern text", parents=[common])
    dec.add_argument("input", nargs="?", default=STDIN)
    dec.add_argument("--vocab")
    dec.add_argument("--text", action="store_true", help="write raw kern text instead of JSON")
    voc = tok_sub.add_parser("vocab", help="build a vocabulary from a corpus", parents=[common])
    voc.add_argument("inputs", nargs="+")
    voc.add_argument("--strategy", choices=[s.value for s in tokenizers.Strategy], default="medium")
    voc.add_argument("--unk", action="store_true", help="reserve an <unk> token")
    voc.add_argument("--out", help="write the vocabulary JSON here as well")
    tok.set_defaults(func=cmd_tok)

    score = sub.add_parser("score", help="CER/WER/LER of hypotheses against references", parents=[common])
    score.add_argument("--ref", required=True, help="reference file or directory")
    score.add_argument("--hyp", required=True, help="hypothesis file or directory (paired by relative path)")
    score.add_argument("--average", choices=["micro", "macro"], default="micro")
    score.add_argument("--detail", action="store_true", help="include per-file scores and edit counts")
    score.add_argument("--diff", action="store_true", help="print line alignments of mismatching files to stderr")
    score.set_defaults(func=cmd_score)

    conv = sub.add_parser("convert", help="MusicXML lead sheets to kern", parents=[common])
    conv.add_argument("inputs", nargs="+")
    conv.add_argument("--out", help="directory for .krn files; without it the text is embedded in the JSON")
    conv.add_argument("--top-voice", action="store_true", help="keep the first voice and top note of chords")
    conv.add_argument("--strict-harmony", action=argparse.BooleanOptionalAction, default=True,
                      help="fail on harmonies whose display text contradicts their kind (default: on)")
    conv.add_argument("--keep-lyrics", default="no", choices=["no"], help="lyrics are always dropped")
    conv.add_argument("--text", action="store_true", help="single input: write raw kern to stdout")
    conv.set_defaults(func=cmd_convert)

    split = sub.add_parser("split", help="train/val/test split of pieces.json", parents=[common])
    split.add_argument("pieces")
    split.add_argument("--ratios", type=_ratios, default=dataset.DEFAULT_RATIOS)
    split.add_argument("--seed", type=int, default=0)
    split.add_argument("--strict", action="store_true", help="fail when multi-copy pieces overflow train")
    split.add_argument("--out", help="also write split.json here")
    split.set_defaults(func=cmd_split)

    reg = sub.add_parser("regions", help="pair staff bounding boxes with kern regions", parents=[common])
    reg.add_argument("score", help="full-score kern file")
    reg.add_argument("boxes", help="JSON list of [x, y, w, h] or {x, y, width, height}")
    reg.add_argument("--score-id")
    reg.add_argument("--image", help="page image reference stored in each record")
    reg.add_argument("--page-size", type=int, nargs=2, metavar=("WIDTH", "HEIGHT"))
    reg.add_argument("--out", help="directory for the per-staff kern files")
    reg.set_defaults(func=cmd_regions)

    pre = sub.add_parser("preprocess", help="normalise region images to 1x128x1000", parents=[common])
    pre.add_argument("inputs", nargs="+")
    pre.add_argument("--out", help="directory for normalised PNGs")
    pre.add_argument("--binarize", action="store_true", help="Otsu threshold after resizing")
    pre.set_defaults(func=cmd_preprocess)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        _err(str(exc))
        return 1
    except BrokenPipeError:
        return 1


if __name__ == "__main__":
    sys.exit(main())
