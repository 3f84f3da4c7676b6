"""Lead-sheet OMR toolkit: Harte chords, two-spine kern, tokenisers, metrics and data prep."""

from .harte import HarteChord, parse_chord, serialize_chord, validate_chord, normalize_surface
from .kern import KernDocument, parse_kern, serialize_kern, split_regions, strip_annotations
from .tokenizers import Strategy, Vocabulary, tokenize, detokenize, build_vocabulary, encode, decode
from .metrics import cer, wer, ler, edit_distance, corpus_report

__version__ = "0.1.0"
