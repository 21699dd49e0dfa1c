"""Feature schema fitting, per-modality encoding, and masked fusion.

A fitted :class:`FeatureSchema` freezes everything encoding needs: category
vocabularies (lexicographic, with a reserved ``missing`` category last),
normalization statistics for continuous fields, tri-slot layouts for
booleans, and the biomarker panel for OCT data.  Encoding is then a pure
function of (record, schema):

* structured fundus fields -> one-hot / z-score / missing-indicator slots,
* OCT measurements -> normalized od/os/ie values plus a numeric status code
  (1.0 within normal, 0.5 borderline, 0.0 outside normal in tristate mode),
* human judgment -> risk one-hot plus a raw confidence slot,
* image/text embeddings -> passthrough blocks from an embedding table.

:func:`fuse` concatenates per-modality blocks in the fixed order
text, struct, human, img, honoring a :class:`ModalityMask`; the risk and
confidence ("sure") flags select sub-spans inside the human block so
judgment ablations stay expressible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .embeddings import EmbeddingTable, stand_in_text_encoder
from .errors import (
    DegenerateContinuous,
    DuplicateModality,
    EmptyDataset,
    EmptyFusion,
    SchemaMismatch,
    VersionMismatch,
)
from .records import (
    BOOLEAN_FUNDUS_FIELDS,
    ClinicalRecord,
    HumanJudgment,
    Measurement,
    OctBiomarkerRecord,
    Status,
)

logger = logging.getLogger("glarisk.features")

MISSING_CATEGORY = "missing"
MODALITY_ORDER = ("text", "struct", "human", "img")

# Struct-field walk order for clinical schemas (stable across runs).
_CLINICAL_CATEGORICAL = ("optic_disc_size", "rim_color")
_CLINICAL_CONTINUOUS = ("cup_to_disc_ratio",)

# Width of the confidence ("sure") span at the tail of every human block.
SURE_WIDTH = 2

SCHEMA_VERSION = 1

# Numeric status codes; in binary mode borderline counts as normal.
TRISTATE_CODES = {
    Status.WITHIN_NORMAL: 1.0,
    Status.BORDERLINE: 0.5,
    Status.OUTSIDE_NORMAL: 0.0,
}
BINARY_CODES = {
    Status.WITHIN_NORMAL: 1.0,
    Status.BORDERLINE: 1.0,
    Status.OUTSIDE_NORMAL: 0.0,
}


@dataclass(frozen=True)
class ContinuousStats:
    """Normalization statistics over the non-missing values of one field."""

    mean: float
    sd: float  # population; 0.0 marks a degenerate (constant/empty) field
    vmin: float
    vmax: float
    count: int

    def z(self, value: float) -> float:
        if self.sd == 0.0:
            return 0.0
        return (value - self.mean) / self.sd


@dataclass(frozen=True)
class ModalityMask:
    """Flags selecting which blocks enter the fused vector.

    ``words`` is the free-text embedding, ``factor`` the structured block,
    ``risk``/``sure`` the judgment sub-spans (risk one-hot, confidence).
    """

    image: bool = False
    words: bool = False
    factor: bool = False
    risk: bool = False
    sure: bool = False

    FLAGS = ("image", "words", "factor", "risk", "sure")

    @classmethod
    def full(cls) -> "ModalityMask":
        return cls(image=True, words=True, factor=True, risk=True, sure=True)

    @classmethod
    def parse(cls, text: str) -> "ModalityMask":
        """Parse ``"factor+risk+sure"`` style mask strings.

        ``"all"`` means every flag; a trailing ``-only`` is tolerated
        (``"factor-only"`` == ``"factor"``).
        """
        text = text.strip().lower()
        if text in ("all", "full"):
            return cls.full()
        flags = {}
        for token in text.split("+"):
            token = token.strip().removesuffix("-only")
            if token not in cls.FLAGS:
                raise ValueError(f"unknown mask flag {token!r} (choose from {cls.FLAGS})")
            flags[token] = True
        if not flags:
            raise ValueError("empty mask")
        return cls(**flags)

    def label(self) -> str:
        on = [f for f in self.FLAGS if getattr(self, f)]
        return "+".join(on) if on else "(empty)"

    @property
    def any(self) -> bool:
        return any(getattr(self, f) for f in self.FLAGS)

    def covers(self, other: "ModalityMask") -> bool:
        return all(getattr(self, f) or not getattr(other, f) for f in self.FLAGS)


@dataclass(frozen=True)
class FeatureBlock:
    """Named dense vector for one modality of one instance."""

    modality: str
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if self.modality not in MODALITY_ORDER:
            raise SchemaMismatch(f"unknown modality {self.modality!r}")
        if len(self.names) != len(self.values):
            raise SchemaMismatch(
                f"{self.modality}: {len(self.names)} names vs {len(self.values)} values")
        if len(set(self.names)) != len(self.names):
            raise SchemaMismatch(f"{self.modality}: duplicate slot names")

    @property
    def width(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class FusedVector:
    """Concatenated multimodal vector for one instance."""

    instance_id: str
    values: np.ndarray
    layout: tuple[tuple[str, int, int], ...]  # (modality, offset, width)
    names: tuple[str, ...]

    @property
    def dim(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class FeatureSchema:
    """Fitted vocabularies and statistics driving all structured encoding."""

    kind: str  # "clinical" | "oct"
    mode: str = "binary"  # status-code mapping: "binary" | "tristate"
    normalize: bool = True
    categorical_vocab: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    boolean_fields: tuple[str, ...] = ()
    continuous_stats: Mapping[str, ContinuousStats] = field(default_factory=dict)
    derived_thresholds: Mapping[str, float] = field(default_factory=dict)
    biomarkers: tuple[str, ...] = ()
    risk_vocab: tuple[str, ...] = (MISSING_CATEGORY,)

    def __post_init__(self):
        if self.kind not in ("clinical", "oct"):
            raise SchemaMismatch(f"unknown schema kind {self.kind!r}")
        if self.mode not in ("binary", "tristate"):
            raise SchemaMismatch(f"unknown schema mode {self.mode!r}")
        for fname, vocab in self.categorical_vocab.items():
            if len(set(vocab)) != len(vocab):
                raise SchemaMismatch(f"{fname}: duplicate vocabulary entries")
            if vocab[-1] != MISSING_CATEGORY:
                raise SchemaMismatch(f"{fname}: vocabulary must end with 'missing'")

    # -- layout ------------------------------------------------------------

    def struct_slots(self) -> tuple[str, ...]:
        """Slot names of the struct block, in layout order."""
        names: list[str] = []
        if self.kind == "clinical":
            for fname in _CLINICAL_CATEGORICAL:
                for cat in self.categorical_vocab[fname]:
                    names.append(f"{fname}={cat}")
            for fname in _CLINICAL_CONTINUOUS:
                names.append(fname)
                names.append(f"{fname}__missing")
                if fname in self.derived_thresholds:
                    stem = f"{fname}_gt{self.derived_thresholds[fname]:g}"
                    names.extend((f"{stem}=false", f"{stem}=true", f"{stem}={MISSING_CATEGORY}"))
            for fname in self.boolean_fields:
                names.extend((f"{fname}=false", f"{fname}=true", f"{fname}={MISSING_CATEGORY}"))
        else:
            for b in self.biomarkers:
                names.extend((f"{b}:od", f"{b}:os", f"{b}:ie", f"{b}:ie__missing", f"{b}:code"))
        return tuple(names)

    def human_slots(self) -> tuple[str, ...]:
        names = [f"glaucoma_risk_assessment={c}" for c in self.risk_vocab]
        names.extend(("confidence_level", "confidence_level__missing"))
        return tuple(names)

    @property
    def struct_dim(self) -> int:
        return len(self.struct_slots())

    @property
    def human_dim(self) -> int:
        return len(self.human_slots())

    @property
    def risk_width(self) -> int:
        return self.human_dim - SURE_WIDTH

    # -- identity ----------------------------------------------------------

    def _content(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "kind": self.kind,
            "mode": self.mode,
            "normalize": self.normalize,
            "categorical_vocab": {k: list(v) for k, v in sorted(self.categorical_vocab.items())},
            "boolean_fields": list(self.boolean_fields),
            "continuous_stats": {
                k: [s.mean, s.sd, s.vmin, s.vmax, s.count]
                for k, s in sorted(self.continuous_stats.items())
            },
            "derived_thresholds": dict(sorted(self.derived_thresholds.items())),
            "biomarkers": list(self.biomarkers),
            "risk_vocab": list(self.risk_vocab),
        }

    @property
    def fingerprint(self) -> str:
        payload = json.dumps(self._content(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def status_code(self, status: Status) -> float:
        codes = TRISTATE_CODES if self.mode == "tristate" else BINARY_CODES
        return codes[status]


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def _fit_stats(values: Sequence[float], name: str) -> ContinuousStats:
    if not values:
        return ContinuousStats(mean=0.0, sd=0.0, vmin=0.0, vmax=0.0, count=0)
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DegenerateContinuous(f"non-finite values in continuous field {name!r}")
    arr = np.sort(arr)  # record order must not leak into the statistics' bits
    sd = float(arr.std())  # population; zero variance handled as degenerate
    return ContinuousStats(mean=float(arr.mean()), sd=sd,
                           vmin=float(arr[0]), vmax=float(arr[-1]),
                           count=int(arr.size))


def fit_schema(records: Sequence[Union[ClinicalRecord, OctBiomarkerRecord]],
               mode: str = "binary", *,
               normalize: bool = True,
               cd_ratio_threshold: Optional[float] = 0.6) -> FeatureSchema:
    """Fit vocabularies and statistics over a homogeneous record list.

    Deterministic regardless of record order: vocabularies are sorted
    lexicographically with the reserved ``missing`` category last, and
    statistics are computed over the non-missing values only.

    ``cd_ratio_threshold`` adds a derived boolean slot marking a high
    cup-to-disc ratio next to the raw normalized value (``None`` disables).
    """
    if not records:
        raise EmptyDataset("cannot fit a schema over zero records")
    kinds = {type(r) for r in records}
    if kinds == {ClinicalRecord}:
        return _fit_clinical(records, mode, normalize, cd_ratio_threshold)
    if kinds == {OctBiomarkerRecord}:
        return _fit_oct(records, mode, normalize)
    raise SchemaMismatch(f"mixed or unsupported record types: {sorted(k.__name__ for k in kinds)}")


def _risk_vocab(records) -> tuple[str, ...]:
    observed = sorted({r.judgment.risk_assessment for r in records
                       if r.judgment is not None and r.judgment.risk_assessment is not None})
    return tuple(observed) + (MISSING_CATEGORY,)


def _fit_clinical(records: Sequence[ClinicalRecord], mode, normalize,
                  cd_ratio_threshold) -> FeatureSchema:
    vocab = {}
    for fname in _CLINICAL_CATEGORICAL:
        observed = sorted({getattr(r.fundus, fname) for r in records
                           if getattr(r.fundus, fname) is not None})
        vocab[fname] = tuple(observed) + (MISSING_CATEGORY,)
    stats = {}
    for fname in _CLINICAL_CONTINUOUS:
        values = [getattr(r.fundus, fname) for r in records
                  if getattr(r.fundus, fname) is not None]
        stats[fname] = _fit_stats(values, fname)
    derived = {}
    if cd_ratio_threshold is not None:
        derived["cup_to_disc_ratio"] = float(cd_ratio_threshold)
    return FeatureSchema(
        kind="clinical", mode=mode, normalize=normalize,
        categorical_vocab=vocab,
        boolean_fields=BOOLEAN_FUNDUS_FIELDS,
        continuous_stats=stats,
        derived_thresholds=derived,
        risk_vocab=_risk_vocab(records),
    )


def _fit_oct(records: Sequence[OctBiomarkerRecord], mode, normalize) -> FeatureSchema:
    names = sorted({m.name for r in records for m in r.measurements})
    if not names:
        raise EmptyDataset("no measurements in any record")
    columns: dict[str, list[float]] = {}
    for r in records:
        for m in r.measurements:
            columns.setdefault(f"{m.name}:od", []).append(m.od)
            columns.setdefault(f"{m.name}:os", []).append(m.os)
            if m.ie is not None:
                columns.setdefault(f"{m.name}:ie", []).append(m.ie)
    stats = {}
    for b in names:
        for part in ("od", "os", "ie"):
            key = f"{b}:{part}"
            stats[key] = _fit_stats(columns.get(key, []), key)
    return FeatureSchema(
        kind="oct", mode=mode, normalize=normalize,
        continuous_stats=stats,
        biomarkers=tuple(names),
        risk_vocab=_risk_vocab(records),
    )


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

def _onehot(vocab: tuple[str, ...], value: Optional[str], fname: str) -> list[float]:
    slots = [0.0] * len(vocab)
    if value is None:
        slots[-1] = 1.0  # reserved missing slot
    elif value in vocab:
        slots[vocab.index(value)] = 1.0
    else:
        logger.warning("field %s: category %r unseen at fit time, encoding as missing",
                       fname, value)
        slots[-1] = 1.0
    return slots


def _trislot(value: Optional[bool]) -> list[float]:
    if value is None:
        return [0.0, 0.0, 1.0]
    return [0.0, 1.0, 0.0] if value else [1.0, 0.0, 0.0]


def _continuous(stats: ContinuousStats, value: Optional[float],
                normalize: bool) -> list[float]:
    if value is None:
        return [0.0, 1.0]
    scaled = stats.z(value) if normalize else float(value)
    return [scaled, 0.0]


def encode_structured(record: ClinicalRecord, schema: FeatureSchema) -> FeatureBlock:
    """Encode fundus annotations into the struct block.

    One-hot slots sum to exactly 1 per field; continuous values are z-scored
    (missing -> 0 plus indicator); the output width is ``schema.struct_dim``
    no matter which fields are missing.
    """
    if schema.kind != "clinical":
        raise SchemaMismatch("clinical record encoded against a non-clinical schema")
    if not isinstance(record, ClinicalRecord):
        raise SchemaMismatch(f"expected ClinicalRecord, got {type(record).__name__}")
    values: list[float] = []
    for fname in _CLINICAL_CATEGORICAL:
        values.extend(_onehot(schema.categorical_vocab[fname],
                              getattr(record.fundus, fname), fname))
    for fname in _CLINICAL_CONTINUOUS:
        raw = getattr(record.fundus, fname)
        values.extend(_continuous(schema.continuous_stats[fname], raw, schema.normalize))
        if fname in schema.derived_thresholds:
            flag = None if raw is None else raw > schema.derived_thresholds[fname]
            values.extend(_trislot(flag))
    for fname in schema.boolean_fields:
        values.extend(_trislot(getattr(record.fundus, fname)))
    return FeatureBlock(modality="struct", names=schema.struct_slots(),
                        values=np.asarray(values, dtype=np.float64))


def encode_tristate(measurements: Sequence[Measurement],
                    schema: FeatureSchema) -> FeatureBlock:
    """Encode an OCT measurement panel into the struct block.

    Per biomarker: normalized od/os/ie slots, an ie-missing indicator, and a
    numeric status code (worse eye wins when the two disagree).  A biomarker
    absent from the panel encodes as NaN so the classifier can route it by
    its learned default direction.
    """
    if schema.kind != "oct":
        raise SchemaMismatch("OCT measurements encoded against a non-OCT schema")
    by_name = {m.name: m for m in measurements}
    unknown = sorted(set(by_name) - set(schema.biomarkers))
    if unknown:
        logger.warning("measurements for biomarkers unseen at fit time ignored: %s",
                       ", ".join(unknown))
    values: list[float] = []
    for b in schema.biomarkers:
        m = by_name.get(b)
        if m is None:
            values.extend([math.nan, math.nan, math.nan, 1.0, math.nan])
            continue
        values.extend(_continuous(schema.continuous_stats[f"{b}:od"], m.od, schema.normalize)[:1])
        values.extend(_continuous(schema.continuous_stats[f"{b}:os"], m.os, schema.normalize)[:1])
        values.extend(_continuous(schema.continuous_stats[f"{b}:ie"], m.ie, schema.normalize))
        code = min(schema.status_code(m.status_od), schema.status_code(m.status_os))
        values.append(code)
    return FeatureBlock(modality="struct", names=schema.struct_slots(),
                        values=np.asarray(values, dtype=np.float64))


def encode_human(judgment: Optional[HumanJudgment],
                 schema: FeatureSchema) -> FeatureBlock:
    """Encode the judgment block: risk one-hot slots then confidence slots.

    A missing judgment activates the risk ``missing`` slot and the
    confidence indicator; it is never an error.
    """
    risk = judgment.risk_assessment if judgment is not None else None
    conf = judgment.confidence_level if judgment is not None else None
    values = _onehot(schema.risk_vocab, risk, "glaucoma_risk_assessment")
    if conf is None:
        values.extend([0.0, 1.0])
    else:
        values.extend([float(conf), 0.0])  # raw confidence, already in [0, 1]
    return FeatureBlock(modality="human", names=schema.human_slots(),
                        values=np.asarray(values, dtype=np.float64))


def embedding_block(modality: str, vector: Optional[np.ndarray], dim: int) -> FeatureBlock:
    """Wrap an embedding vector (or a NaN sentinel row when absent)."""
    if modality not in ("text", "img"):
        raise SchemaMismatch(f"embedding block must be text or img, got {modality!r}")
    if vector is None:
        values = np.full(dim, math.nan)
    else:
        values = np.asarray(vector, dtype=np.float64)
        if values.shape != (dim,):
            raise SchemaMismatch(f"{modality} vector has shape {values.shape}, expected ({dim},)")
    names = tuple(f"{modality}[{i}]" for i in range(dim))
    return FeatureBlock(modality=modality, names=names, values=values)


def fuse(blocks: Iterable[FeatureBlock], mask: ModalityMask,
         instance_id: str = "") -> FusedVector:
    """Concatenate blocks in the fixed order text, struct, human, img.

    The risk/sure flags select sub-spans of the human block.  Input order of
    ``blocks`` never matters; a modality appearing twice is an error, and a
    mask selecting nothing (or only empty blocks) is an error.
    """
    if not mask.any:
        raise EmptyFusion("mask selects no modality")
    by_mod: dict[str, FeatureBlock] = {}
    for block in blocks:
        if block.modality in by_mod:
            raise DuplicateModality(f"two blocks with modality {block.modality!r}")
        by_mod[block.modality] = block

    wanted = {"text": mask.words, "struct": mask.factor,
              "human": mask.risk or mask.sure, "img": mask.image}
    names: list[str] = []
    chunks: list[np.ndarray] = []
    layout: list[tuple[str, int, int]] = []
    offset = 0
    for mod in MODALITY_ORDER:
        if not wanted[mod]:
            continue
        block = by_mod.get(mod)
        if block is None:
            raise SchemaMismatch(f"mask selects {mod!r} but no such block was provided")
        mod_names, mod_values = block.names, block.values
        if mod == "human":
            risk_width = len(mod_names) - SURE_WIDTH
            lo = 0 if mask.risk else risk_width
            hi = len(mod_names) if mask.sure else risk_width
            mod_names, mod_values = mod_names[lo:hi], mod_values[lo:hi]
        if len(mod_names) == 0:
            continue
        layout.append((mod, offset, len(mod_names)))
        names.extend(mod_names)
        chunks.append(np.asarray(mod_values, dtype=np.float64))
        offset += len(mod_names)
    if offset == 0:
        raise EmptyFusion("all selected blocks are empty")
    return FusedVector(instance_id=instance_id,
                       values=np.concatenate(chunks),
                       layout=tuple(layout),
                       names=tuple(names))


# ---------------------------------------------------------------------------
# Dataset assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EncodedMatrix:
    """Dense design matrix plus row ids/labels and column provenance."""

    ids: tuple[str, ...]
    labels: tuple[Optional[int], ...]
    X: np.ndarray
    names: tuple[str, ...]
    layout: tuple[tuple[str, int, int], ...]
    schema_fingerprint: str
    mask: ModalityMask

    @property
    def y(self) -> np.ndarray:
        unlabeled = [rid for rid, label in zip(self.ids, self.labels) if label is None]
        if unlabeled:
            raise EmptyDataset(
                f"{len(unlabeled)} unlabeled rows (e.g. {', '.join(unlabeled[:5])}); "
                "annotate them or pass --derive-labels")
        return np.asarray(self.labels, dtype=np.int64)

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def encode_record(record: Union[ClinicalRecord, OctBiomarkerRecord],
                  schema: FeatureSchema) -> dict[str, FeatureBlock]:
    """Struct + human blocks for one record (embeddings are joined separately)."""
    if isinstance(record, ClinicalRecord):
        struct = encode_structured(record, schema)
    else:
        struct = encode_tristate(record.measurements, schema)
    return {"struct": struct, "human": encode_human(record.judgment, schema)}


def build_matrix(records: Sequence[Union[ClinicalRecord, OctBiomarkerRecord]],
                 schema: FeatureSchema,
                 mask: ModalityMask, *,
                 text_table: Optional[EmbeddingTable] = None,
                 image_table: Optional[EmbeddingTable] = None,
                 stand_in_text_dim: Optional[int] = None,
                 stand_in_text_seed: int = 7) -> EncodedMatrix:
    """Encode and fuse a whole dataset under one mask.

    Text vectors come from ``text_table`` keyed by record id, or from the
    stand-in text encoder over the record narrative when
    ``stand_in_text_dim`` is given instead.  Image vectors come from
    ``image_table`` keyed by ``image_ref``; a record without an image_ref
    gets a NaN sentinel row.  Ids that a masked-in table fails to cover are
    a hard error, listed.
    """
    if not records:
        raise EmptyDataset("no records to encode")
    if mask.words and text_table is None and stand_in_text_dim is None:
        raise SchemaMismatch("mask selects words but no text source was provided")
    if mask.image and image_table is None:
        raise SchemaMismatch("mask selects image but no image table was provided")

    if mask.words and text_table is not None:
        missing = [r.id for r in records if r.id not in text_table]
        if missing:
            raise SchemaMismatch(
                f"text table missing {len(missing)} ids: {', '.join(missing[:10])}")
    if mask.image:
        missing = [r.image_ref for r in records
                   if r.image_ref is not None and r.image_ref not in image_table]
        if missing:
            raise SchemaMismatch(
                f"image table missing {len(missing)} refs: {', '.join(missing[:10])}")

    text_dim = text_table.dim if text_table is not None else (stand_in_text_dim or 0)
    img_dim = image_table.dim if image_table is not None else 0

    rows: list[FusedVector] = []
    for record in records:
        blocks = list(encode_record(record, schema).values())
        if mask.words:
            if text_table is not None:
                vec = text_table[record.id]
            else:
                text = record.narrative_text if isinstance(record, ClinicalRecord) else ""
                vec = stand_in_text_encoder(text, stand_in_text_dim, stand_in_text_seed)
            blocks.append(embedding_block("text", vec, text_dim))
        if mask.image:
            vec = image_table[record.image_ref] if record.image_ref is not None else None
            blocks.append(embedding_block("img", vec, img_dim))
        rows.append(fuse(blocks, mask, instance_id=record.id))

    first = rows[0]
    X = np.stack([r.values for r in rows])
    return EncodedMatrix(
        ids=tuple(r.id for r in records),
        labels=tuple(r.label.class_index if r.label else None for r in records),
        X=X,
        names=first.names,
        layout=first.layout,
        schema_fingerprint=schema.fingerprint,
        mask=mask,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_schema(schema: FeatureSchema, path: Union[str, Path]) -> None:
    payload = schema._content()
    payload["format"] = "GLASCHEMA"
    payload["fingerprint"] = schema.fingerprint
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_schema(path: Union[str, Path]) -> FeatureSchema:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "GLASCHEMA":
        raise SchemaMismatch(f"{path}: not a schema file")
    if payload.get("version") != SCHEMA_VERSION:
        raise VersionMismatch(f"{path}: schema version {payload.get('version')}, "
                              f"expected {SCHEMA_VERSION}")
    schema = FeatureSchema(
        kind=payload["kind"],
        mode=payload["mode"],
        normalize=payload["normalize"],
        categorical_vocab={k: tuple(v) for k, v in payload["categorical_vocab"].items()},
        boolean_fields=tuple(payload["boolean_fields"]),
        continuous_stats={
            k: ContinuousStats(mean=v[0], sd=v[1], vmin=v[2], vmax=v[3], count=int(v[4]))
            for k, v in payload["continuous_stats"].items()
        },
        derived_thresholds=dict(payload["derived_thresholds"]),
        biomarkers=tuple(payload["biomarkers"]),
        risk_vocab=tuple(payload["risk_vocab"]),
    )
    stored = payload.get("fingerprint")
    if stored and stored != schema.fingerprint:
        raise SchemaMismatch(f"{path}: fingerprint {stored} does not match content "
                             f"({schema.fingerprint})")
    return schema


MATRIX_MAGIC = "GLAMAT"
MATRIX_VERSION = 1


def write_matrix(matrix: EncodedMatrix, path: Union[str, Path]) -> None:
    """Write the encoded-matrix text format (round-trippable)."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{MATRIX_MAGIC} {MATRIX_VERSION} {len(matrix.ids)} {matrix.dim} "
                 f"{matrix.schema_fingerprint}\n")
        fh.write("#mask\t" + matrix.mask.label() + "\n")
        fh.write("#layout\t" + "\t".join(f"{m}:{o}:{w}" for m, o, w in matrix.layout) + "\n")
        fh.write("#names\t" + "\t".join(matrix.names) + "\n")
        for i, rid in enumerate(matrix.ids):
            label = "?" if matrix.labels[i] is None else str(matrix.labels[i])
            row = " ".join(repr(float(v)) for v in matrix.X[i])
            fh.write(f"{rid}\t{label}\t{row}\n")


def read_matrix(path: Union[str, Path]) -> EncodedMatrix:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="\n") as fh:
        header = fh.readline().split()
        if len(header) != 5 or header[0] != MATRIX_MAGIC:
            raise SchemaMismatch(f"{path}: bad matrix header")
        if int(header[1]) != MATRIX_VERSION:
            raise VersionMismatch(f"{path}: matrix version {header[1]}")
        n, d, fingerprint = int(header[2]), int(header[3]), header[4]
        mask = ModalityMask.parse(fh.readline().split("\t", 1)[1].strip())
        layout_cells = fh.readline().rstrip("\n").split("\t")[1:]
        layout = tuple((m, int(o), int(w)) for m, o, w in
                       (cell.split(":") for cell in layout_cells))
        names = tuple(fh.readline().rstrip("\n").split("\t")[1:])
        ids, labels, rows = [], [], []
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            rid, label, values = line.split("\t", 2)
            ids.append(rid)
            labels.append(None if label == "?" else int(label))
            rows.append(np.array(values.split(), dtype=np.float64))
    X = np.stack(rows) if rows else np.zeros((0, d))
    if X.shape != (n, d) or len(names) != d:
        raise SchemaMismatch(f"{path}: matrix shape {X.shape} does not match header")
    return EncodedMatrix(ids=tuple(ids), labels=tuple(labels), X=X, names=names,
                         layout=layout, schema_fingerprint=fingerprint, mask=mask)
