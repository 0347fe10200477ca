"""Caption corpora: manifest I/O, vocabulary building, training examples and
the synthetic two-modality task."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import dummy_sequence
from .errors import ConfigurationError, DataError
from .io import FeatureFile, atomic_write, read_features, write_features
from .training import Example
from .vocab import Vocabulary, tokenize

SPLITS = ("train", "val", "test")
AUDIO = "audio"


@dataclass
class Clip:
    id: str
    split: str
    features: dict  # modality -> Path or ndarray [T, D]
    captions: list[list[str]]
    meta: dict = field(default_factory=dict)

    def feature(self, name: str) -> np.ndarray:
        src = self.features[name]
        if isinstance(src, np.ndarray):
            return src
        return read_features(src).data


@dataclass
class CaptionCorpus:
    clips: list[Clip]

    def __post_init__(self):
        seen = set()
        for c in self.clips:
            if c.id in seen:
                raise DataError(f"clip id {c.id!r} appears more than once")
            seen.add(c.id)
            if c.split not in SPLITS:
                raise DataError(f"clip {c.id!r}: unknown split {c.split!r}; allowed: {', '.join(SPLITS)}")
            if not c.captions:
                raise DataError(f"clip {c.id!r} has no captions")

    def split(self, name: str) -> list[Clip]:
        return [c for c in self.clips if c.split == name]

    def by_id(self) -> dict[str, Clip]:
        return {c.id: c for c in self.clips}

    @property
    def modalities(self) -> list[str]:
        names = []
        for c in self.clips:
            for n in c.features:
                if n not in names:
                    names.append(n)
        return names


def load_manifest(path, strict: bool = True) -> CaptionCorpus:
    """Read a JSON-lines manifest; feature paths are relative to its directory.

    With ``strict=False`` missing feature files are listed in ``clip.meta["missing"]``
    instead of raising.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    root = path.parent
    clips = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from None
        if "id" not in obj:
            raise DataError(f"{path}:{lineno}: entry has no id")
        feats, missing = {}, []
        for name, rel in obj.get("features", {}).items():
            fp = (root / rel) if not Path(rel).is_absolute() else Path(rel)
            if not fp.is_file():
                if strict:
                    raise DataError(f"{path}:{lineno}: clip {obj['id']!r} feature file missing: {fp}")
                missing.append(str(fp))
                continue
            feats[name] = fp
        captions = [tokenize(c) for c in obj.get("captions", [])]
        meta = {k: v for k, v in obj.items() if k not in ("id", "split", "features", "captions")}
        if missing:
            meta["missing"] = missing
        clips.append(Clip(str(obj["id"]), obj.get("split", "train"), feats, captions, meta))
    return CaptionCorpus(clips)


def write_corpus(corpus: CaptionCorpus, out_dir, extraction: dict | None = None) -> Path:
    """Write every in-memory feature matrix as an MMFS file plus ``manifest.jsonl``."""
    out_dir = Path(out_dir)
    lines = []
    for c in corpus.clips:
        rel = {}
        for name, src in c.features.items():
            r = f"features/{c.id}.{name}.mmfs"
            data = src if isinstance(src, np.ndarray) else read_features(src).data
            write_features(out_dir / r, FeatureFile(name, np.asarray(data, dtype=np.float32), extraction or {}))
            rel[name] = r
        obj = {"id": c.id, "split": c.split, "features": rel, "captions": [" ".join(t) for t in c.captions]}
        obj.update(c.meta)
        lines.append(json.dumps(obj, sort_keys=True))
    manifest = out_dir / "manifest.jsonl"
    atomic_write(manifest, "\n".join(lines) + "\n")
    return manifest


def build_vocabulary(corpus: CaptionCorpus, min_count: int = 1) -> Vocabulary:
    """Train-split tokens with count >= ``min_count``, ordered by (frequency desc, token)."""
    train = corpus.split("train")
    if not train:
        raise DataError("cannot build a vocabulary from an empty training split")
    counts = Counter(tok for c in train for cap in c.captions for tok in cap)
    words = sorted((w for w, n in counts.items() if n >= min_count), key=lambda w: (-counts[w], w))
    return Vocabulary.from_words(words)


def clip_features(clip: Clip, modalities: list[tuple[str, int]], dummy_length: int = 1) -> list[np.ndarray]:
    """Feature arrays in model order; a missing ``audio`` stream becomes zero vectors."""
    out = []
    for name, dim in modalities:
        if name in clip.features:
            arr = np.asarray(clip.feature(name), dtype=np.float64)
            if arr.shape[1] != dim:
                raise DataError(f"clip {clip.id!r}: {name} features have dim {arr.shape[1]}, expected {dim}")
        elif name == AUDIO:
            arr = dummy_sequence(dummy_length, dim)
        else:
            raise ConfigurationError(f"clip {clip.id!r} lacks modality {name!r}")
        out.append(arr)
    return out


def feature_dims(corpus: CaptionCorpus, names: list[str]) -> dict[str, int]:
    dims = {}
    for c in corpus.clips:
        for n in names:
            if n in c.features and n not in dims:
                dims[n] = int(np.asarray(c.feature(n)).shape[1])
        if len(dims) == len(names):
            break
    return dims


def to_examples(clips: list[Clip], vocab: Vocabulary, modalities: list[tuple[str, int]], dummy_length: int = 1) -> list[Example]:
    """One example per (clip, caption); out-of-vocabulary words map to ``<unk>``."""
    out = []
    for c in clips:
        feats = clip_features(c, modalities, dummy_length)
        for cap in c.captions:
            if cap:
                out.append(Example(c.id, feats, vocab.encode(cap)))
    return out


# ---------------------------------------------------------------------------
# synthetic task

OBJECT_STREAM = "objects"
ACTION_STREAM = "actions"


def synthetic_feature_dim(n_symbols: int) -> int:
    return n_symbols + 2


def generate_synthetic_task(
    seed: int,
    n_clips: int,
    n_objects: int = 8,
    n_actions: int = 8,
    noise: float = 0.1,
    splits: tuple[int, int, int] | None = None,
    corrupt_prob: float = 0.3,
    min_len: int = 8,
    max_len: int = 16,
    shared_lexicon: bool = True,
) -> CaptionCorpus:
    """Two-stream captioning task whose caption is ``obj_i act_j obj_k act_l``.

    Each frame of a stream is ``[one-hot symbol | first-slot mark | second-slot mark]``.
    The object stream marks two frames carrying objects ``i`` and ``k``; the
    action stream marks two frames carrying actions ``j`` and ``l``. All other
    frames are blank, except that with probability ``corrupt_prob`` one stream
    of the clip has every unmarked frame filled with a single distractor
    symbol, repeated, so a model reading that stream without regard to the
    slot marks sees a confident wrong answer. Gaussian noise of std ``noise`` is added everywhere.

    ``splits`` gives (train, val, test) counts; default 70/10/20 percent.
    """
    if n_clips < 10:
        raise DataError(f"synthetic task needs n_clips >= 10, got {n_clips}")
    if splits is None:
        n_val = max(1, n_clips // 10)
        n_test = max(1, n_clips // 5)
        splits = (n_clips - n_val - n_test, n_val, n_test)
    if sum(splits) != n_clips or min(splits) < 1:
        raise DataError(f"split sizes {splits} must be positive and sum to {n_clips}")
    rng = np.random.default_rng(seed)
    labels = ["train"] * splits[0] + ["val"] * splits[1] + ["test"] * splits[2]
    clips = []
    for idx in range(n_clips):
        L = int(rng.integers(min_len, max_len + 1))
        objs = rng.integers(0, n_objects, size=2)
        acts = rng.integers(0, n_actions, size=2)
        corrupted = None
        if rng.random() < corrupt_prob:
            corrupted = OBJECT_STREAM if rng.random() < 0.5 else ACTION_STREAM
        streams, slots = {}, {}
        for name, syms, n_sym in ((OBJECT_STREAM, objs, n_objects), (ACTION_STREAM, acts, n_actions)):
            x = np.zeros((L, synthetic_feature_dim(n_sym)))
            pos = rng.choice(L, size=2, replace=False)
            for slot, (p, s) in enumerate(zip(pos, syms)):
                x[p, s] = 1.0
                x[p, n_sym + slot] = 1.0
            if name == corrupted:
                distractor = rng.integers(0, n_sym)
                for t in sorted(set(range(L)) - set(pos.tolist())):
                    x[t, distractor] = 1.0
            x += noise * rng.standard_normal(x.shape)
            streams[name] = x.astype(np.float32)
            slots[name] = [int(p) for p in pos]
        caption = synthetic_caption(objs, acts, shared_lexicon)
        meta = {"corrupted": corrupted, "slots": slots}
        clips.append(Clip(f"syn{idx:05d}", labels[idx], streams, [caption], meta))
    return CaptionCorpus(clips)


def synthetic_caption(objs, acts, shared_lexicon: bool = True) -> list[str]:
    if shared_lexicon:
        return [f"sym_{objs[0]}", f"sym_{acts[0]}", f"sym_{objs[1]}", f"sym_{acts[1]}"]
    return [f"obj_{objs[0]}", f"act_{acts[0]}", f"obj_{objs[1]}", f"act_{acts[1]}"]


def _read_slot(x: np.ndarray, n_sym: int, slot: int) -> int:
    frame = int(np.argmax(x[:, n_sym + slot]))
    return int(np.argmax(x[frame, :n_sym]))


def oracle_decode(objects: np.ndarray, actions: np.ndarray, n_objects: int = 8, n_actions: int = 8,
                  shared_lexicon: bool = True) -> list[str]:
    """Read each stream's symbol at its marked frames and assemble the caption."""
    o = [_read_slot(objects, n_objects, s) for s in (0, 1)]
    a = [_read_slot(actions, n_actions, s) for s in (0, 1)]
    return synthetic_caption(o, a, shared_lexicon)
