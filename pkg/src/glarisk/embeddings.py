"""Per-instance embedding vectors: storage, pooling, and stand-in encoders.

The classifier consumes image and text modalities as dense vectors keyed by
an opaque id.  Tables travel in the GLAEMB v1 text format::

    GLAEMB 1 <count> <dim>
    <id>\t<v1> <v2> ... <vdim>

UTF-8, LF line endings, ids may not contain a tab.  Real encoders live in a
separate exporter; the stand-in encoders here are deterministic functions of
(input, dim, seed) so the whole pipeline runs at desk scale with no
pretrained weights.
"""

from __future__ import annotations

import hashlib
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import (
    BadHeader,
    DimensionMismatch,
    DuplicateId,
    EmptyImage,
    EmptySequence,
    NonFiniteValue,
    RaggedInput,
)

GLAEMB_MAGIC = "GLAEMB"
GLAEMB_VERSION = 1


@dataclass(frozen=True)
class EmbeddingTable:
    """Immutable id -> vector store; every vector has length ``dim``."""

    dim: int
    entries: Mapping[str, np.ndarray]
    provenance: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionMismatch(f"dim must be >= 1, got {self.dim}")
        for key, vec in self.entries.items():
            if "\t" in key:
                raise DuplicateId(f"id {key!r} contains a tab")
            if vec.shape != (self.dim,):
                raise DimensionMismatch(
                    f"entry {key!r} has shape {vec.shape}, expected ({self.dim},)")
            if not np.all(np.isfinite(vec)):
                raise NonFiniteValue(f"entry {key!r} contains non-finite values")

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def __getitem__(self, key: str) -> np.ndarray:
        return self.entries[key]

    def __len__(self) -> int:
        return len(self.entries)


def read_embedding_table(path: Union[str, Path]) -> EmbeddingTable:
    """Load a GLAEMB v1 file; read(write(t)) == t within 1e-9."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="\n") as fh:
        header = fh.readline().rstrip("\n")
        parts = header.split()
        if len(parts) != 4 or parts[0] != GLAEMB_MAGIC:
            raise BadHeader(f"bad header {header!r}", file=str(path), line=1)
        try:
            version, count, dim = int(parts[1]), int(parts[2]), int(parts[3])
        except ValueError:
            raise BadHeader(f"non-integer header fields in {header!r}",
                            file=str(path), line=1) from None
        if version != GLAEMB_VERSION:
            raise BadHeader(f"unsupported version {version}", file=str(path), line=1)
        entries: dict[str, np.ndarray] = {}
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise BadHeader("missing tab separator", file=str(path), line=lineno)
            key, _, rest = line.partition("\t")
            if key in entries:
                raise DuplicateId(f"duplicate id {key!r}", file=str(path), line=lineno)
            try:
                values = np.array(rest.split(), dtype=np.float64)
            except ValueError:
                raise BadHeader("non-numeric vector cell", file=str(path),
                                line=lineno) from None
            if values.size != dim:
                raise DimensionMismatch(
                    f"{path}:{lineno}: entry {key!r} has {values.size} values, expected {dim}")
            if not np.all(np.isfinite(values)):
                raise NonFiniteValue(f"{path}:{lineno}: entry {key!r} has non-finite values")
            entries[key] = values
    if len(entries) != count:
        raise BadHeader(f"header count {count} != {len(entries)} rows",
                        file=str(path), line=1)
    return EmbeddingTable(dim=dim, entries=entries, provenance=str(path))


def write_embedding_table(table: EmbeddingTable, path: Union[str, Path]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{GLAEMB_MAGIC} {GLAEMB_VERSION} {len(table)} {table.dim}\n")
        for key, vec in table.entries.items():
            fh.write(key + "\t" + " ".join(repr(float(v)) for v in vec) + "\n")


def mean_pool(token_vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Component-wise arithmetic mean of equal-length vectors."""
    if len(token_vectors) == 0:
        raise EmptySequence("mean_pool of zero vectors")
    first = np.asarray(token_vectors[0], dtype=np.float64)
    stacked = []
    for vec in token_vectors:
        arr = np.asarray(vec, dtype=np.float64)
        if arr.shape != first.shape:
            raise RaggedInput(f"vector shapes differ: {arr.shape} vs {first.shape}")
        stacked.append(arr)
    return np.mean(np.stack(stacked), axis=0)


# ---------------------------------------------------------------------------
# Stand-in encoders
# ---------------------------------------------------------------------------

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


def normalize_text(text: str) -> list[str]:
    """Lowercase, strip punctuation, whitespace-tokenize."""
    return text.lower().translate(_PUNCT_TABLE).split()


def _token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    # Token identity hashed into an RNG seed: same (token, dim, seed) in, same
    # unit vector out, across runs and platforms.
    digest = hashlib.sha256(f"{seed}\x00{token}".encode("utf-8")).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "little")))
    vec = rng.standard_normal(dim)
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def stand_in_text_encoder(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic bag-of-hashed-tokens sentence vector.

    Each token maps to a seeded pseudo-random unit vector; the sentence
    embedding is the mean pool of its token vectors.  Empty text encodes to
    the zero vector.
    """
    if dim < 1:
        raise DimensionMismatch(f"dim must be >= 1, got {dim}")
    tokens = normalize_text(text)
    if not tokens:
        return np.zeros(dim)
    return mean_pool([_token_vector(t, dim, seed) for t in tokens])


def stand_in_image_encoder(pixels: np.ndarray, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic grayscale-image vector: block stats under a fixed projection.

    The image is cut into a 4x4 grid; per-block means and variances plus
    global gradient statistics form a raw descriptor, which a seeded fixed
    matrix projects to ``dim`` components.  No invariances are claimed; the
    contract is only fixed dimension and determinism.
    """
    if dim < 1:
        raise DimensionMismatch(f"dim must be >= 1, got {dim}")
    img = np.asarray(pixels, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise EmptyImage(f"expected a non-empty 2-D gray matrix, got shape {img.shape}")
    grid = 4
    h_edges = np.linspace(0, img.shape[0], grid + 1).astype(int)
    w_edges = np.linspace(0, img.shape[1], grid + 1).astype(int)
    stats = []
    for i in range(grid):
        for j in range(grid):
            block = img[h_edges[i]:max(h_edges[i + 1], h_edges[i] + 1),
                        w_edges[j]:max(w_edges[j + 1], w_edges[j] + 1)]
            stats.append(block.mean())
            stats.append(block.var())
    gy, gx = np.gradient(img) if min(img.shape) > 1 else (np.zeros_like(img),) * 2
    stats.extend([img.mean(), img.var(),
                  np.abs(gx).mean(), np.abs(gy).mean(),
                  gx.var(), gy.var()])
    raw = np.asarray(stats)
    rng = np.random.Generator(np.random.PCG64(seed))
    projection = rng.standard_normal((dim, raw.size)) / np.sqrt(raw.size)
    return projection @ raw
