"""Synthetic untrimmed-video world: planted moments, interval sampling,
chunking, and the binary feature-store format.

Frame features are unit-norm rows in R^C. Frames inside a planted moment
point toward that moment's concept vector (plus noise); background frames
are random directions. Features are quantized through float32 at
generation time so the on-disk format round-trips bit-exactly.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    GenerationError,
    TruncatedFileError,
    VersionMismatchError,
)

MAGIC = b"MALN"
VERSION = 1


@dataclass
class Narration:
    concept_id: int
    t: float          # annotation timestamp, seconds
    a: float          # true interval start
    b: float          # true interval end


@dataclass
class VideoRecord:
    video_id: str
    duration: float
    fps: int
    features: np.ndarray          # T x C, float64, unit rows
    narrations: list[Narration] = field(default_factory=list)

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


@dataclass
class MomentSample:
    concept_id: int
    start: float
    end: float


class ConceptVocabulary:
    """Fixed random unit concept vectors standing in for text embeddings."""

    def __init__(self, vectors: np.ndarray):
        self.vectors = np.asarray(vectors, dtype=np.float64)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def generate(cls, size: int, dim: int, rng: np.random.Generator,
                 max_cosine: float = 0.5) -> "ConceptVocabulary":
        vectors = np.zeros((size, dim))
        for k in range(size):
            for _ in range(1000):
                v = rng.standard_normal(dim)
                v /= np.linalg.norm(v)
                if k == 0 or np.max(np.abs(vectors[:k] @ v)) < max_cosine:
                    vectors[k] = v
                    break
            else:
                raise GenerationError(
                    f"could not place concept {k} with pairwise |cos| < {max_cosine}"
                )
        return cls(vectors)

    def save(self, path):
        np.savez(path, vectors=self.vectors)

    @classmethod
    def load(cls, path) -> "ConceptVocabulary":
        with np.load(path) as z:
            return cls(z["vectors"])


def generate_video(vocab: ConceptVocabulary, num_moments: int, duration: float,
                   fps: int, noise_level: float, rng_seed: int,
                   video_id: str = "video") -> VideoRecord:
    """Plant ``num_moments`` non-overlapping moments in a synthetic video.

    One moment per equal slot of the timeline; the narration timestamp is
    the interval midpoint. Deterministic per seed.
    """
    if num_moments < 1:
        raise GenerationError("need at least one moment")
    slot = duration / num_moments
    if slot * fps < 2:
        raise GenerationError(
            f"{num_moments} moments cannot fit in {duration}s at {fps} fps"
        )
    rng = np.random.default_rng(rng_seed)
    if num_moments <= vocab.size:
        concepts = rng.permutation(vocab.size)[:num_moments]
    else:
        concepts = rng.integers(0, vocab.size, size=num_moments)

    narrations = []
    for j in range(num_moments):
        length = rng.uniform(0.3, 0.6) * slot
        a = j * slot + rng.uniform(0.0, slot - length)
        b = a + length
        narrations.append(Narration(int(concepts[j]), (a + b) / 2.0, a, b))

    T = int(round(duration * fps))
    C = vocab.dim
    feats = rng.standard_normal((T, C))
    times = (np.arange(T) + 0.5) / fps
    for n in narrations:
        inside = (times >= n.a) & (times <= n.b)
        feats[inside] = vocab.vectors[n.concept_id] + noise_level * feats[inside]
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    # quantize through the storage dtype so store/load is bit-exact
    feats = feats.astype(np.float32).astype(np.float64)
    return VideoRecord(video_id, duration, fps, feats, narrations)


def sample_interval(narrations: list[Narration], j: int, duration: float,
                    rng: np.random.Generator) -> MomentSample:
    """Draw a start/end pair around narration j, bounded by its neighbors.

    start ~ U(t_{j-1}, t_j), end ~ U(t_j, t_{j+1}); the first narration uses
    the video start as its left bound and the last uses the video end.
    """
    t = narrations[j].t
    t_prev = narrations[j - 1].t if j > 0 else 0.0
    t_next = narrations[j + 1].t if j < len(narrations) - 1 else duration
    return MomentSample(
        narrations[j].concept_id,
        float(rng.uniform(t_prev, t)),
        float(rng.uniform(t, t_next)),
    )


def chunk_video(record: VideoRecord, chunk_seconds: float) -> list[VideoRecord]:
    """Split into consecutive non-overlapping chunks; last one may be short.

    Narrations land in the chunk containing their timestamp, re-based to the
    chunk start; true intervals are clipped to the chunk.
    """
    if chunk_seconds <= 0:
        raise GenerationError("chunk_seconds must be positive")
    if chunk_seconds >= record.duration:
        return [record]
    T = record.num_frames
    n_chunks = int(np.ceil(record.duration / chunk_seconds))
    chunks = []
    for k in range(n_chunks):
        f0 = int(round(k * chunk_seconds * record.fps))
        f1 = min(int(round((k + 1) * chunk_seconds * record.fps)), T)
        offset = k * chunk_seconds
        dur = min(chunk_seconds, record.duration - offset)
        chunks.append(VideoRecord(
            f"{record.video_id}_c{k}", dur, record.fps,
            record.features[f0:f1], []))
    for n in record.narrations:
        k = min(int(n.t // chunk_seconds), n_chunks - 1)
        off = k * chunk_seconds
        chunks[k].narrations.append(Narration(
            n.concept_id, n.t - off,
            max(n.a - off, 0.0),
            min(n.b - off, chunks[k].duration)))
    return chunks


# ---------------------------------------------------------------------------
# feature-store format (little-endian):
#   "MALN" | u32 version | u32 T | u32 C | T*C float32 row-major |
#   u32 narration count | per narration: u32 concept_id, f64 t, f64 a, f64 b
# ---------------------------------------------------------------------------

def store(record: VideoRecord, path):
    with open(path, "wb") as f:
        T, C = record.features.shape
        f.write(struct.pack("<4sIII", MAGIC, VERSION, T, C))
        f.write(record.features.astype("<f4").tobytes())
        f.write(struct.pack("<I", len(record.narrations)))
        for n in record.narrations:
            f.write(struct.pack("<Iddd", n.concept_id, n.t, n.a, n.b))


def load(path, video_id: str, duration: float, fps: int) -> VideoRecord:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 16:
        raise TruncatedFileError(f"{path}: shorter than the 16-byte header")
    magic, version, T, C = struct.unpack_from("<4sIII", blob, 0)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    off = 16
    need = T * C * 4
    if len(blob) < off + need + 4:
        raise TruncatedFileError(f"{path}: truncated feature payload")
    feats = np.frombuffer(blob, dtype="<f4", count=T * C, offset=off)
    feats = feats.reshape(T, C).astype(np.float64)
    off += need
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    if len(blob) < off + count * 28:
        raise TruncatedFileError(f"{path}: truncated narration block")
    narrations = []
    for _ in range(count):
        cid, t, a, b = struct.unpack_from("<Iddd", blob, off)
        off += 28
        narrations.append(Narration(cid, t, a, b))
    return VideoRecord(video_id, duration, fps, feats, narrations)
