"""Manifests, binary feature matrices, prediction CSVs, soft targets and evaluation splits."""

from __future__ import annotations

import csv
import io
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .labels import ATTRIBUTE_RANGE, ATTRIBUTES, CATEGORIES

MATRIX_MAGIC = b"MLEV"
MATRIX_VERSION = 1
_MATRIX_HEADER = struct.Struct("<4sIII")
_U32_MAX = 0xFFFFFFFF

TASK1_HEADER = ["id"] + [f"p_{c}" for c in CATEGORIES] + ["pred"]
TASK2_HEADER = ["id", *ATTRIBUTES]
LABEL_HEADER = ["id", "pred"]
SIMPLEX_TOL = 1e-6


class ManifestError(ValueError):
    """Invalid manifest content; messages carry the offending line number."""


class FormatError(ValueError):
    """Malformed binary matrix or prediction file."""


@dataclass(frozen=True)
class WordAlignment:
    token: str
    start: float
    end: float


@dataclass
class Sample:
    id: str
    wav: str
    transcript: str = ""
    words: list[WordAlignment] = field(default_factory=list)
    votes: dict[str, float] | None = None
    label: str | None = None
    attributes: tuple[float, float, float] | None = None
    embeddings: dict[str, str] = field(default_factory=dict)
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def wav_path(self) -> Path:
        return self.resolve(self.wav)

    def embedding_paths(self) -> dict[str, Path]:
        return {name: self.resolve(p) for name, p in self.embeddings.items()}

    def to_json(self) -> dict:
        """Canonical JSON object; key order is fixed."""
        out = {
            "id": self.id,
            "wav": self.wav,
            "transcript": self.transcript,
            "words": [{"token": w.token, "start": w.start, "end": w.end} for w in self.words],
        }
        if self.votes is not None:
            out["votes"] = dict(self.votes)
        if self.label is not None:
            out["label"] = self.label
        if self.attributes is not None:
            out["attributes"] = dict(zip(ATTRIBUTES, self.attributes))
        if self.embeddings:
            out["embeddings"] = dict(self.embeddings)
        return out


def _parse_sample(obj, lineno: int, base_dir: Path) -> Sample:
    def fail(msg):
        raise ManifestError(f"line {lineno}: {msg}")

    if not isinstance(obj, dict):
        fail("expected a JSON object")
    for key in ("id", "wav"):
        if not isinstance(obj.get(key), str) or not obj[key]:
            fail(f"missing or empty string field {key!r}")
    words = []
    prev_end = -np.inf
    for i, w in enumerate(obj.get("words") or []):
        try:
            wa = WordAlignment(str(w["token"]), float(w["start"]), float(w["end"]))
        except (KeyError, TypeError, ValueError):
            fail(f"word {i}: needs token, start and end")
        if not wa.end > wa.start:
            fail(f"word {i} ({wa.token!r}): end {wa.end} must exceed start {wa.start}")
        if wa.start < prev_end - 1e-9:
            fail(f"word {i} ({wa.token!r}) overlaps or precedes the previous word")
        prev_end = wa.end
        words.append(wa)
    votes = obj.get("votes")
    if votes is not None:
        if not isinstance(votes, dict) or any(not isinstance(v, (int, float)) or v < 0 for v in votes.values()):
            fail("votes must map category to a non-negative count")
        votes = {str(k): float(v) for k, v in votes.items()}
    label = obj.get("label")
    if label is not None and label not in CATEGORIES:
        fail(f"invalid category {label!r}; expected one of {''.join(CATEGORIES)}")
    attrs = obj.get("attributes")
    if attrs is not None:
        if isinstance(attrs, dict):
            try:
                attrs = [attrs[a] for a in ATTRIBUTES]
            except KeyError as exc:
                fail(f"attributes missing {exc.args[0]!r}")
        if len(attrs) != 3:
            fail("attributes need valence, arousal and dominance")
        lo, hi = ATTRIBUTE_RANGE
        for name, v in zip(ATTRIBUTES, attrs):
            if not isinstance(v, (int, float)) or not lo <= v <= hi:
                fail(f"attribute {name}={v} outside [{lo:g}, {hi:g}]")
        attrs = tuple(float(v) for v in attrs)
    emb = obj.get("embeddings") or {}
    if not isinstance(emb, dict) or any(not isinstance(v, str) for v in emb.values()):
        fail("embeddings must map a name to a file path")
    return Sample(
        id=obj["id"],
        wav=obj["wav"],
        transcript=str(obj.get("transcript", "")),
        words=words,
        votes=votes,
        label=label,
        attributes=attrs,
        embeddings=dict(emb),
        base_dir=base_dir,
    )


def load_manifest(path) -> list[Sample]:
    """Read a JSON Lines manifest; relative paths resolve against its directory."""
    path = Path(path)
    base = path.parent
    samples: list[Sample] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            sample = _parse_sample(obj, lineno, base)
            if sample.id in seen:
                raise ManifestError(f"line {lineno}: duplicate id {sample.id!r} (first on line {seen[sample.id]})")
            seen[sample.id] = lineno
            samples.append(sample)
    return samples


def save_manifest(path, samples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# binary matrices


def write_matrix(path, matrix) -> None:
    """Write a 2-D float32 matrix: magic, version, rows, cols (u32 LE), then row-major LE float32."""
    m = np.asarray(matrix)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise FormatError(f"expected a 2-D matrix, got shape {m.shape}")
    rows, cols = m.shape
    if rows > _U32_MAX or cols > _U32_MAX:
        raise FormatError(f"matrix shape {m.shape} overflows the u32 header")
    payload = np.ascontiguousarray(m, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_MATRIX_HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, rows, cols))
        fh.write(payload)


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _MATRIX_HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(data)} of {_MATRIX_HEADER.size} bytes)")
    magic, version, rows, cols = _MATRIX_HEADER.unpack_from(data)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MATRIX_MAGIC!r}")
    if version != MATRIX_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _MATRIX_HEADER.size + 4 * rows * cols
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for a {rows}x{cols} matrix, found {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=_MATRIX_HEADER.size).reshape(rows, cols).astype(np.float32)


# ---------------------------------------------------------------------------
# prediction CSVs


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_predictions(path, ids, values, categories=CATEGORIES) -> None:
    """Write class probabilities (m x 8) or attribute values (m x 3), chosen by column count."""
    values = np.asarray(values, dtype=np.float64)
    ids = list(ids)
    if values.ndim != 2 or values.shape[0] != len(ids):
        raise FormatError(f"need one row per id: {len(ids)} ids, values of shape {values.shape}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if values.shape[1] == len(categories):
        writer.writerow(["id"] + [f"p_{c}" for c in categories] + ["pred"])
        for i, row in zip(ids, values):
            writer.writerow([i, *(_fmt(v) for v in row), categories[int(np.argmax(row))]])
    elif values.shape[1] == 3:
        writer.writerow(TASK2_HEADER)
        for i, row in zip(ids, values):
            writer.writerow([i, *(_fmt(v) for v in row)])
    else:
        raise FormatError(f"unsupported prediction width {values.shape[1]}")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_labels(path, ids, labels) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LABEL_HEADER)
    for i, lab in zip(ids, labels):
        writer.writerow([i, lab])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _numeric(path, body, cols: slice) -> np.ndarray:
    out = []
    for n, r in enumerate(body, start=2):
        try:
            out.append([float(v) for v in r[cols]])
        except ValueError as exc:
            raise FormatError(f"{path}: line {n}: {exc}") from exc
    return np.array(out, dtype=np.float64)


def read_predictions(path, categories=CATEGORIES):
    """Read a prediction CSV.

    Returns ``(kind, ids, values)`` where ``kind`` is ``"categorical"``
    (values: m x 8 probabilities, rows re-validated on the simplex),
    ``"attributes"`` (m x 3) or ``"labels"`` (values: list of category codes).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    task1 = ["id"] + [f"p_{c}" for c in categories] + ["pred"]
    ids = [r[0] for r in body]
    if len(set(ids)) != len(ids):
        raise FormatError(f"{path}: duplicate ids")
    for n, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise FormatError(f"{path}: line {n} has {len(r)} fields, header has {len(header)}")
    if header == task1:
        probs = _numeric(path, body, slice(1, -1)).reshape(len(body), len(categories))
        bad = np.flatnonzero((np.abs(probs.sum(axis=1) - 1.0) > SIMPLEX_TOL) | (probs < -SIMPLEX_TOL).any(axis=1))
        if bad.size:
            raise FormatError(f"{path}: row for id {ids[bad[0]]!r} is off the probability simplex")
        return "categorical", ids, probs
    if header == TASK2_HEADER:
        vals = _numeric(path, body, slice(1, None)).reshape(len(body), 3)
        return "attributes", ids, vals
    if header == LABEL_HEADER:
        labels = [r[1] for r in body]
        for lab in labels:
            if lab not in categories:
                raise FormatError(f"{path}: invalid category {lab!r}")
        return "labels", ids, labels
    raise FormatError(f"{path}: header mismatch, got {header}; expected {task1}, {TASK2_HEADER} or {LABEL_HEADER}")


# ---------------------------------------------------------------------------
# soft targets and splits


def soft_targets(votes: dict, categories=CATEGORIES) -> np.ndarray:
    """Normalize annotator votes over the emotion categories; other keys are ignored."""
    counts = np.array([float(votes.get(c, 0.0)) for c in categories])
    if (counts < 0).any():
        raise ValueError("vote counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise ValueError(f"no usable votes among {list(categories)} in {votes}")
    return counts / total


def hard_target(label: str, categories=CATEGORIES) -> np.ndarray:
    out = np.zeros(len(categories))
    out[categories.index(label)] = 1.0
    return out


@dataclass(frozen=True)
class SplitSpec:
    n_sets: int = 5
    per_class: int = 326
    seed: int = 0
    overlap: bool = True  # False draws the sets disjointly

    def __post_init__(self):
        if self.per_class < 1 or self.n_sets < 1:
            raise ValueError("n_sets and per_class must be positive")


def balanced_splits(samples, spec: SplitSpec = SplitSpec(), categories=CATEGORIES) -> list[list[int]]:
    """Draw class-balanced evaluation sets of ``per_class`` samples per category.

    Each set is drawn by a seeded shuffle per class. Sets are independent
    (and may share samples) unless ``spec.overlap`` is false. Returned index
    lists are sorted.
    """
    by_class = {c: [] for c in categories}
    for i, s in enumerate(samples):
        if s.label in by_class:
            by_class[s.label].append(i)
    need = spec.per_class if spec.overlap else spec.per_class * spec.n_sets
    for c in categories:
        if len(by_class[c]) < need:
            raise ValueError(f"class {c} has {len(by_class[c])} samples, {need} required")
    rng = np.random.default_rng(spec.seed)
    sets: list[list[int]] = [[] for _ in range(spec.n_sets)]
    for c in categories:
        pool = np.asarray(by_class[c])
        if spec.overlap:
            for k in range(spec.n_sets):
                sets[k].extend(rng.permutation(pool)[: spec.per_class].tolist())
        else:
            perm = rng.permutation(pool)
            for k in range(spec.n_sets):
                sets[k].extend(perm[k * spec.per_class : (k + 1) * spec.per_class].tolist())
    return [sorted(s) for s in sets]


def load_jsonl_vectors(path, key: str) -> dict[str, np.ndarray]:
    """Load a sidecar file of ``{"id": ..., key: [...]}`` lines into a dict."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out[str(obj["id"])] = np.asarray(obj[key], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{os.fspath(path)} line {lineno}: expected {{'id', {key!r}}} ({exc})") from exc
    return out
