"""Caption corpora: normalization, vocabulary, TSV files, synthetic data.

File formats (all UTF-8, tab-separated):
  captions   image_id<TAB>raw caption text        (one caption per line)
  features   image_id<TAB>f1,f2,...,fD            (comma-joined floats)
  vocabulary index<TAB>token<TAB>count
  splits     image_id<TAB>train|val
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import MissingFeatureError, ParseError, VocabularyError

START_TOKEN = "<START>"
END_TOKEN = "<END>"
UNK_TOKEN = "<UNK>"
SPECIAL_TOKENS = (START_TOKEN, END_TOKEN, UNK_TOKEN)

START = 0
END = 1
UNK = 2

DEFAULT_MIN_COUNT = 5
DEFAULT_MAX_WORDS = 16

_STRIP_RE = re.compile(r"[^a-z\s]")


def normalize(text: str) -> list[str]:
    """Lowercase, delete non-alphabetic characters, split on whitespace.

    Digits and punctuation are removed outright ("don't" becomes "dont");
    whitespace of any kind separates tokens.
    """
    return _STRIP_RE.sub("", text.lower()).split()


@dataclass
class Vocabulary:
    """Token table with the three specials pinned to indices 0..2."""

    tokens: list[str]
    counts: list[int]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:3]) != SPECIAL_TOKENS:
            raise VocabularyError(
                f"vocabulary must start with {SPECIAL_TOKENS}, got {self.tokens[:3]}"
            )
        if len(self.tokens) != len(self.counts):
            raise VocabularyError("token and count lists differ in length")
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise VocabularyError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def lookup(self, token: str) -> int:
        """Index of ``token``, or the <UNK> index when absent."""
        return self.index.get(token, UNK)

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, (tok, cnt) in enumerate(zip(self.tokens, self.counts)):
                fh.write(f"{i}\t{tok}\t{cnt}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        tokens: list[str] = []
        counts: list[int] = []
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ParseError(
                        "expected index<TAB>token<TAB>count", path, line_no
                    )
                idx_s, tok, cnt_s = parts
                try:
                    idx, cnt = int(idx_s), int(cnt_s)
                except ValueError:
                    raise ParseError("non-integer index or count", path, line_no)
                if idx != len(tokens):
                    raise ParseError(
                        f"indices must be consecutive, expected {len(tokens)}",
                        path,
                        line_no,
                    )
                tokens.append(tok)
                counts.append(cnt)
        return cls(tokens, counts)


def build_vocabulary(
    captions: Iterable[str], min_count: int = DEFAULT_MIN_COUNT
) -> Vocabulary:
    """Count normalized tokens, keep those seen >= min_count times.

    Kept tokens are ordered by descending count, ties lexicographically,
    after the three specials. The result is independent of caption order.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts: dict[str, int] = {}
    saw_caption = False
    for cap in captions:
        saw_caption = True
        for tok in normalize(cap):
            counts[tok] = counts.get(tok, 0) + 1
    if not saw_caption or not counts:
        raise VocabularyError("empty corpus: no tokens to build a vocabulary from")
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda tok: (-counts[tok], tok),
    )
    return Vocabulary(
        tokens=list(SPECIAL_TOKENS) + kept,
        counts=[0, 0, 0] + [counts[t] for t in kept],
    )


def encode_caption(
    vocab: Vocabulary, text: str, max_words: int = DEFAULT_MAX_WORDS
) -> list[int]:
    """Normalize, map unknowns to <UNK>, truncate, wrap in <START>/<END>."""
    words = normalize(text)[:max_words]
    return [START] + [vocab.lookup(w) for w in words] + [END]


def decode_caption(vocab: Vocabulary, indices: Sequence[int]) -> str:
    """Interior tokens joined by single spaces; <START>/<END> are dropped."""
    words = [
        vocab.token(i) for i in indices if i not in (START, END)
    ]
    return " ".join(words)


@dataclass
class CaptionRecord:
    image_id: str
    tokens: list[int]

    def __post_init__(self):
        if len(self.tokens) < 2 or self.tokens[0] != START or self.tokens[-1] != END:
            raise ValueError(
                "caption records must be <START> ... <END> token sequences"
            )


class FeatureStore:
    """image_id -> float64 feature vector, all sharing one dimension."""

    def __init__(self, features: dict[str, np.ndarray]):
        if not features:
            raise ValueError("feature store cannot be empty")
        self._features: dict[str, np.ndarray] = {}
        self.dim = -1
        for image_id, vec in features.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"feature for {image_id!r} is not a vector")
            if self.dim < 0:
                self.dim = arr.shape[0]
            elif arr.shape[0] != self.dim:
                raise ValueError(
                    f"feature for {image_id!r} has dimension {arr.shape[0]}, "
                    f"expected {self.dim}"
                )
            self._features[image_id] = arr

    def __len__(self) -> int:
        return len(self._features)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._features

    def ids(self) -> list[str]:
        return list(self._features)

    def get(self, image_id: str) -> np.ndarray:
        try:
            return self._features[image_id]
        except KeyError:
            raise MissingFeatureError(image_id) from None

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for image_id, vec in self._features.items():
                joined = ",".join(repr(float(v)) for v in vec)
                fh.write(f"{image_id}\t{joined}\n")


def load_features(path) -> FeatureStore:
    features: dict[str, np.ndarray] = {}
    dim = -1
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError("expected image_id<TAB>values", path, line_no)
            image_id, values = parts
            try:
                vec = np.array(
                    [float(v) for v in values.split(",")], dtype=np.float64
                )
            except ValueError:
                raise ParseError("non-numeric feature value", path, line_no)
            if dim < 0:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise ParseError(
                    f"feature dimension {vec.shape[0]} != {dim}", path, line_no
                )
            if image_id in features:
                raise ParseError(f"duplicate image id {image_id!r}", path, line_no)
            features[image_id] = vec
    if not features:
        raise ParseError("no feature rows found", path)
    return FeatureStore(features)


def load_captions(path) -> list[tuple[str, str]]:
    """(image_id, raw caption) pairs; multiple lines per id are allowed."""
    pairs: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError("expected image_id<TAB>caption", path, line_no)
            pairs.append((parts[0], parts[1]))
    if not pairs:
        raise ParseError("no caption rows found", path)
    return pairs


def save_captions(path, pairs: Sequence[tuple[str, str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for image_id, caption in pairs:
            fh.write(f"{image_id}\t{caption}\n")


def load_hypotheses(path) -> list[tuple[str, str]]:
    """(image_id, caption) pairs from a caption TSV or decoder output.

    Decoder output carries a trailing log-probability column; it is
    checked for being numeric and then dropped.
    """
    pairs: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) == 3:
                try:
                    float(parts[2])
                except ValueError:
                    raise ParseError("third column must be a log-probability",
                                     path, line_no)
            elif len(parts) != 2:
                raise ParseError(
                    "expected image_id<TAB>caption[<TAB>logprob]", path, line_no
                )
            pairs.append((parts[0], parts[1]))
    if not pairs:
        raise ParseError("no hypothesis rows found", path)
    return pairs


def load_splits(path) -> dict[str, str]:
    splits: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in ("train", "val"):
                raise ParseError("expected image_id<TAB>train|val", path, line_no)
            splits[parts[0]] = parts[1]
    if not splits:
        raise ParseError("no split rows found", path)
    return splits


def save_splits(path, splits: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for image_id, split in splits.items():
            fh.write(f"{image_id}\t{split}\n")


# ---------------------------------------------------------------------------
# synthetic corpus

_COLORS = (
    "red green blue yellow black white brown gray orange purple pink teal "
    "gold silver maroon olive navy coral ivory crimson"
).split()
_OBJECTS = (
    "cat dog bird horse boat truck chair table lamp kite ball tree house "
    "train plane bike cup book clock flower"
).split()
_VERBS = (
    "sitting standing resting waiting sleeping playing hiding running "
    "jumping floating leaning spinning rolling drifting perched balancing "
    "gliding racing turning swaying"
).split()
_PLACES = (
    "park yard field kitchen garden street harbor meadow forest attic "
    "station plaza valley desert museum library market canyon beach cave"
).split()

_SLOTS = 6  # color, object, verb, place, second color, second object


def synth_caption(choice: tuple[int, ...], grammar_size: int) -> str:
    c1, o1, vb, pl, c2, o2 = choice
    return (
        f"a {_COLORS[c1]} {_OBJECTS[o1]} {_VERBS[vb]} in the {_PLACES[pl]} "
        f"near a {_COLORS[c2]} {_OBJECTS[o2]}"
    )


def synth_corpus(
    seed: int, n_images: int, grammar_size: int = 8
) -> tuple[list[tuple[str, str]], FeatureStore]:
    """Deterministic toy corpus whose features fully determine the caption.

    Each image draws six attributes (two color/object pairs, a verb, a
    place) from lists of ``grammar_size`` choices; the feature vector is
    the concatenation of the six one-hot blocks, so a captioner can in
    principle reproduce every caption exactly from the features alone.
    """
    if n_images < 1:
        raise ValueError(f"n_images must be >= 1, got {n_images}")
    max_size = min(len(_COLORS), len(_OBJECTS), len(_VERBS), len(_PLACES))
    if not (1 <= grammar_size <= max_size):
        raise ValueError(f"grammar_size must be in 1..{max_size}, got {grammar_size}")
    rng = random.Random(seed)
    pairs: list[tuple[str, str]] = []
    features: dict[str, np.ndarray] = {}
    for i in range(n_images):
        choice = tuple(rng.randrange(grammar_size) for _ in range(_SLOTS))
        image_id = f"img{i:04d}"
        pairs.append((image_id, synth_caption(choice, grammar_size)))
        vec = np.zeros(_SLOTS * grammar_size)
        for slot, idx in enumerate(choice):
            vec[slot * grammar_size + idx] = 1.0
        features[image_id] = vec
    return pairs, FeatureStore(features)


def assign_splits(image_ids: Sequence[str], seed: int) -> dict[str, str]:
    """Deterministic train/val assignment; roughly one in eight goes to val."""
    ids = list(image_ids)
    rng = random.Random(seed)
    rng.shuffle(ids)
    n_val = max(1, len(ids) // 8) if len(ids) > 1 else 0
    val = set(ids[:n_val])
    return {image_id: ("val" if image_id in val else "train") for image_id in image_ids}
