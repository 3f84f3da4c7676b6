"""Split manifests, staff-region records and image normalisation."""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .kern import KernDocument, serialize_kern, split_regions

__all__ = [
    "PieceRecord",
    "SplitManifest",
    "RegionRecord",
    "NormalizedImage",
    "InfeasibleRatios",
    "CountMismatch",
    "UndecodableImage",
    "DegenerateImage",
    "SUBSETS",
    "DEFAULT_RATIOS",
    "split_sizes",
    "make_split",
    "load_pieces",
    "build_region_records",
    "preprocess_image",
    "otsu_threshold",
    "TARGET_HEIGHT",
    "TARGET_WIDTH",
    "BACKGROUND",
]

SUBSETS = ("train", "val", "test")
DEFAULT_RATIOS = (0.7, 0.1, 0.2)
TARGET_HEIGHT = 128
TARGET_WIDTH = 1000
BACKGROUND = 1.0


class InfeasibleRatios(ValueError):
    pass


class CountMismatch(ValueError):
    def __init__(self, boxes: int, regions: int, score_id: str | None = None):
        self.boxes, self.regions = boxes, regions
        where = f"{score_id}: " if score_id else ""
        super().__init__(f"{where}{boxes} bounding boxes but {regions} kern regions")


class UndecodableImage(ValueError):
    pass


class DegenerateImage(ValueError):
    pass


# --- splits -------------------------------------------------------------------------

@dataclass(frozen=True)
class PieceRecord:
    piece_id: str
    copies: tuple[str, ...]
    synthetic: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "copies", tuple(self.copies))
        object.__setattr__(self, "synthetic", tuple(self.synthetic))
        if not self.copies:
            raise ValueError(f"piece {self.piece_id!r} has no handwritten copies")

    @classmethod
    def from_dict(cls, data: Mapping) -> "PieceRecord":
        return cls(str(data["piece_id"]), tuple(data["copies"]), tuple(data.get("synthetic", ())))

    def to_dict(self) -> dict:
        return {"piece_id": self.piece_id, "copies": list(self.copies), "synthetic": list(self.synthetic)}


@dataclass
class SplitManifest:
    assignment: dict[str, str]
    seed: int
    ratios: tuple[float, float, float]
    forced_train: frozenset[str] = frozenset()
    warnings: list[str] = field(default_factory=list)

    def subset(self, name: str) -> list[str]:
        return sorted(p for p, s in self.assignment.items() if s == name)

    def counts(self) -> dict[str, int]:
        return {s: len(self.subset(s)) for s in SUBSETS}

    def scores(self, pieces: Iterable[PieceRecord]) -> dict[str, list[str]]:
        """Handwritten score ids per subset."""
        out: dict[str, list[str]] = {s: [] for s in SUBSETS}
        for p in pieces:
            out[self.assignment[p.piece_id]].extend(p.copies)
        return {s: sorted(ids) for s, ids in out.items()}

    def to_dict(self) -> dict:
        return {
            "assignment": dict(sorted(self.assignment.items())),
            "counts": self.counts(),
            "forced_train": sorted(self.forced_train),
            "ratios": list(self.ratios),
            "seed": self.seed,
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping) -> "SplitManifest":
        return cls(dict(data["assignment"]), int(data["seed"]), tuple(data["ratios"]),
                   frozenset(data.get("forced_train", ())), list(data.get("warnings", ())))


def split_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    """Piece counts per subset: val and test are floored, train takes the rest.

    >>> split_sizes(163, (0.7, 0.1, 0.2))
    (115, 16, 32)
    """
    _, val, test = ratios
    # a small epsilon keeps float noise (0.1 * 160 = 16.000000000000004) from changing floors
    v = math.floor(val * n + 1e-9)
    t = math.floor(test * n + 1e-9)
    return n - v - t, v, t


def _check_ratios(ratios: Sequence[float]) -> tuple[float, float, float]:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-6):
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {tuple(ratios)}")
    return tuple(float(r) for r in ratios)


def make_split(
    pieces: Sequence[PieceRecord],
    ratios: Sequence[float] = DEFAULT_RATIOS,
    seed: int = 0,
    *,
    strict: bool = False,
) -> SplitManifest:
    """Assign every piece to one subset.

    Pieces with more than one handwritten copy always go to train. The other
    pieces are shuffled with ``random.Random(seed)`` (in ``piece_id`` order
    first, so input order does not matter) and fill val and test up to their
    target sizes; the remainder is train. When the forced pieces alone exceed
    the train target, val and test shrink and a warning is recorded, or
    :class:`InfeasibleRatios` is raised with ``strict``.
    """
    ratios = _check_ratios(ratios)
    ids = [p.piece_id for p in pieces]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate piece_id in input")
    if not pieces:
        if strict:
            raise InfeasibleRatios("no pieces to split")
        return SplitManifest({}, seed, ratios, frozenset(), ["no pieces to split"])

    forced = frozenset(p.piece_id for p in pieces if len(p.copies) > 1)
    free = sorted(p.piece_id for p in pieces if p.piece_id not in forced)
    train_n, val_n, test_n = split_sizes(len(pieces), ratios)
    warnings = []
    if len(forced) > train_n:
        msg = f"{len(forced)} multi-copy pieces exceed the train target of {train_n}"
        if strict:
            raise InfeasibleRatios(msg)
        warnings.append(msg)
        spare = len(free)
        test_n = min(test_n, spare)
        val_n = min(val_n, spare - test_n)

    random.Random(seed).shuffle(free)
    assignment = {pid: "train" for pid in forced}
    for pid in free[:val_n]:
        assignment[pid] = "val"
    for pid in free[val_n:val_n + test_n]:
        assignment[pid] = "test"
    for pid in free[val_n + test_n:]:
        assignment[pid] = "train"
    return SplitManifest(assignment, seed, ratios, forced, warnings)


def load_pieces(path: str | Path) -> list[PieceRecord]:
    return [PieceRecord.from_dict(d) for d in json.loads(Path(path).read_text(encoding="utf-8"))]


# --- region records -----------------------------------------------------------------

@dataclass(frozen=True)
class RegionRecord:
    image: str
    box: tuple[int, int, int, int]  # x, y, width, height in pixels
    kern: str
    score_id: str
    staff: int

    def __post_init__(self) -> None:
        if self.staff < 0:
            raise ValueError("staff index must be non-negative")
        if any(v < 0 for v in self.box) or self.box[2] == 0 or self.box[3] == 0:
            raise ValueError(f"bad bounding box {self.box}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["box"] = list(self.box)
        return d


def _box(raw) -> tuple[int, int, int, int]:
    if isinstance(raw, Mapping):
        return int(raw["x"]), int(raw["y"]), int(raw["width"]), int(raw["height"])
    x, y, w, h = raw
    return int(x), int(y), int(w), int(h)


def build_region_records(
    score: KernDocument,
    boxes: Sequence,
    *,
    score_id: str,
    image: str,
    page_size: tuple[int, int] | None = None,
    kern_template: str = "{score_id}_{staff:02d}.krn",
) -> tuple[list[RegionRecord], list[KernDocument]]:
    """Pair staff boxes (top to bottom) with the kern regions of a score.

    Boxes are ``[x, y, w, h]`` lists or ``{"x", "y", "width", "height"}``
    mappings. ``page_size`` is ``(width, height)``; when given, boxes must lie
    inside the page. Returns the records and the region documents they name.
    """
    regions = split_regions(score)
    parsed = sorted((_box(b) for b in boxes), key=lambda b: (b[1], b[0]))
    if len(parsed) != len(regions):
        raise CountMismatch(len(parsed), len(regions), score_id)
    records = []
    for staff, box in enumerate(parsed):
        if page_size is not None:
            x, y, w, h = box
            if x + w > page_size[0] or y + h > page_size[1]:
                raise ValueError(f"{score_id}: box {box} outside page {page_size}")
        records.append(RegionRecord(image, box, kern_template.format(score_id=score_id, staff=staff), score_id, staff))
    return records, regions


def write_regions(records: Sequence[RegionRecord], regions: Sequence[KernDocument], out_dir: str | Path) -> Path:
    """Write one kern file per staff plus ``regions.json``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for rec, doc in zip(records, regions):
        (out / rec.kern).write_text(serialize_kern(doc), encoding="utf-8")
    manifest = out / "regions.json"
    manifest.write_text(json.dumps([r.to_dict() for r in records], indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


# --- images --------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalizedImage:
    pixels: np.ndarray  # float32, shape (1, TARGET_HEIGHT, TARGET_WIDTH), values in [0, 1]
    content_width: int
    content_height: int
    source_size: tuple[int, int]  # (width, height) of the input

    @property
    def shape(self) -> tuple[int, ...]:
        return self.pixels.shape


def otsu_threshold(gray: np.ndarray) -> float:
    """Otsu threshold of values in [0, 1], searched over 256 bins."""
    hist, edges = np.histogram(gray, bins=256, range=(0.0, 1.0))
    hist = hist.astype(np.float64)
    centers = (edges[:-1] + edges[1:]) / 2
    w0 = np.cumsum(hist)
    w1 = w0[-1] - w0
    m0 = np.cumsum(hist * centers)
    mu0 = np.divide(m0, w0, out=np.zeros_like(m0), where=w0 > 0)
    mu1 = np.divide(m0[-1] - m0, w1, out=np.zeros_like(m0), where=w1 > 0)
    between = w0 * w1 * (mu0 - mu1) ** 2
    return float(edges[int(np.argmax(between)) + 1])


def _to_gray(image) -> np.ndarray:
    if isinstance(image, (str, Path)):
        try:
            with Image.open(image) as im:
                im.load()
                image = im.copy()
        except (UnidentifiedImageError, OSError) as exc:
            raise UndecodableImage(f"{image}: {exc}") from exc
    if isinstance(image, Image.Image):
        if image.mode in ("RGBA", "LA", "P"):
            rgba = image.convert("RGBA")
            page = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
            image = Image.alpha_composite(page, rgba)
        arr = np.asarray(image.convert("L"), dtype=np.float32) / 255.0
    else:
        arr = np.asarray(image)
        if arr.ndim == 3:
            # channels-first (c, h, w) when c in {1, 3, 4}, else channels-last
            if arr.shape[0] in (1, 3, 4):
                arr = np.moveaxis(arr, 0, -1)
            if arr.shape[-1] == 1:
                arr = arr[..., 0]
            else:
                rgb = arr[..., :3].astype(np.float32)
                arr = rgb @ np.array([0.299, 0.587, 0.114], dtype=np.float32)
        elif arr.ndim != 2:
            raise UndecodableImage(f"array of shape {arr.shape} is not an image")
        arr = arr.astype(np.float32)
        if np.issubdtype(np.asarray(image).dtype, np.integer):
            arr /= 255.0
    if arr.size == 0 or 0 in arr.shape:
        raise DegenerateImage(f"image has a zero dimension: {arr.shape}")
    return np.clip(arr, 0.0, 1.0)


def preprocess_image(image, *, binarize: bool = False) -> NormalizedImage:
    """Grayscale, resize to height 128 keeping aspect, right-pad to width 1000.

    Accepts a path, a PIL image, or an array (2-D, channels-first or
    channels-last; integer arrays are read as 0..255). Images that would be
    wider than 1000 at height 128 are fitted to width 1000 instead and padded
    at the bottom. Padding is white (1.0).
    """
    gray = _to_gray(image)
    h, w = gray.shape
    scale = min(TARGET_HEIGHT / h, TARGET_WIDTH / w)
    new_w = min(TARGET_WIDTH, max(1, round(w * scale)))
    new_h = min(TARGET_HEIGHT, max(1, round(h * scale)))
    if (new_w, new_h) != (w, h):
        pil = Image.fromarray(gray)
        gray = np.asarray(pil.resize((new_w, new_h), Image.Resampling.LANCZOS), dtype=np.float32)
        gray = np.clip(gray, 0.0, 1.0)
    if binarize:
        gray = (gray > otsu_threshold(gray)).astype(np.float32)
    canvas = np.full((1, TARGET_HEIGHT, TARGET_WIDTH), BACKGROUND, dtype=np.float32)
    canvas[0, :new_h, :new_w] = gray
    return NormalizedImage(canvas, new_w, new_h, (w, h))


def save_image(img: NormalizedImage, path: str | Path) -> None:
    Image.fromarray(np.round(img.pixels[0] * 255).astype(np.uint8)).save(path)
