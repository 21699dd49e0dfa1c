"""Domain records for the two clinical dataset shapes, and their parsers.

Two kinds of raw input exist:

* **Clinical records** — fundus-photograph annotation objects (disc size,
  cup-to-disc ratio, rim descriptors, free-text narrative) plus an optional
  human judgment (risk category + confidence).  Serialized as a line-oriented
  ``key: value`` block per record::

      record r0001
      optic_disc_size: large
      cup_to_disc_ratio: 0.8
      rim_pallor: true
      neuroretinal_rim: rim appears thin superiorly
      glaucoma_risk_assessment: high risk
      confidence_level: 0.9
      image_ref: img_r0001
      label: 1
      end

  Absent keys (or the literal value ``null``) mean "missing".  Blank lines
  and ``#`` comments are ignored.  Free-text values run to end of line.

* **Biomarker tables** — per-eye OCT measurements, one row group per
  subject, tab-separated, with the fixed header ``biomarker  od  os  ie``::

      biomarker	od	os	ie
      @subject	s001	label=0	image_ref=oct_s001
      AR	97	91	6
      I-ER (S-I)	-5	3	N/A

  Rows may carry two extra cells with explicit per-eye statuses
  (``WithinNormal`` / ``Borderline`` / ``OutsideNormal``); otherwise the
  status is assigned from the normative-bounds catalog.

All parsed objects are immutable; parsing is pure and safe to run from any
number of workers.
"""

from __future__ import annotations

import importlib.resources
import math
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

from .errors import (
    InconsistentIE,
    MalformedRecord,
    MalformedTable,
    MissingBounds,
    OutOfRange,
    UnknownBiomarker,
    UnknownField,
    UnmappedCategory,
)

# Relative tolerance for the inter-eye consistency check: table values are
# integers or 3-decimal reals, so anything larger signals a transcription bug.
IE_RELATIVE_TOLERANCE = 1e-6

OPTIC_DISC_SIZES = ("small", "normal", "large")

BOOLEAN_FUNDUS_FIELDS = (
    "isnt_rule_followed",
    "rim_pallor",
    "bayoneting",
    "sharp_edge",
    "laminar_dot_sign",
    "notching",
    "rim_thinning",
)

# Canonical key order for serialization (mirrors the annotation form).
CLINICAL_FIELD_ORDER = (
    "optic_disc_size",
    "cup_to_disc_ratio",
    "isnt_rule_followed",
    "rim_pallor",
    "rim_color",
    "bayoneting",
    "sharp_edge",
    "laminar_dot_sign",
    "notching",
    "rim_thinning",
    "additional_observations",
    "neuroretinal_rim",
    "glaucoma_risk_assessment",
    "confidence_level",
    "image_ref",
    "label",
)


class Status(Enum):
    """Tri-state normative status of one measurement on one eye."""

    WITHIN_NORMAL = "WithinNormal"
    BORDERLINE = "Borderline"
    OUTSIDE_NORMAL = "OutsideNormal"

    @classmethod
    def parse(cls, text: str) -> "Status":
        for member in cls:
            if member.value.lower() == text.strip().lower():
                return member
        raise ValueError(f"not a status: {text!r}")


@dataclass(frozen=True)
class FundusFeatures:
    """Machine-readable fundus annotations; ``None`` encodes "missing"."""

    optic_disc_size: Optional[str] = None
    cup_to_disc_ratio: Optional[float] = None
    isnt_rule_followed: Optional[bool] = None
    rim_pallor: Optional[bool] = None
    rim_color: Optional[str] = None
    bayoneting: Optional[bool] = None
    sharp_edge: Optional[bool] = None
    laminar_dot_sign: Optional[bool] = None
    notching: Optional[bool] = None
    rim_thinning: Optional[bool] = None
    additional_observations: Optional[str] = None
    neuroretinal_rim: Optional[str] = None

    def __post_init__(self):
        if self.cup_to_disc_ratio is not None and not (0.0 <= self.cup_to_disc_ratio <= 1.0):
            raise OutOfRange(
                f"cup_to_disc_ratio={self.cup_to_disc_ratio} outside [0, 1]",
                field="cup_to_disc_ratio",
            )
        if self.optic_disc_size is not None and self.optic_disc_size not in OPTIC_DISC_SIZES:
            raise OutOfRange(
                f"optic_disc_size={self.optic_disc_size!r} not one of {OPTIC_DISC_SIZES}",
                field="optic_disc_size",
            )


@dataclass(frozen=True)
class HumanJudgment:
    """Annotator's overall risk call and self-reported confidence."""

    risk_assessment: Optional[str] = None
    confidence_level: Optional[float] = None

    def __post_init__(self):
        if self.confidence_level is not None and not (0.0 <= self.confidence_level <= 1.0):
            raise OutOfRange(
                f"confidence_level={self.confidence_level} outside [0, 1]",
                field="confidence_level",
            )

    @property
    def is_empty(self) -> bool:
        return self.risk_assessment is None and self.confidence_level is None


@dataclass(frozen=True)
class Label:
    """Class assignment for one record.

    ``class_index`` is 0/1 in binary mode; a third class (index 2) is used
    when borderline subjects are modeled as their own category.
    """

    class_index: int
    source: str = "annotated"  # or "derived-from-risk"

    def __post_init__(self):
        if self.class_index < 0:
            raise OutOfRange(f"label {self.class_index} negative", field="label")
        if self.source not in ("annotated", "derived-from-risk"):
            raise ValueError(f"bad label source {self.source!r}")

    def check_range(self, n_classes: int) -> None:
        if self.class_index >= n_classes:
            raise OutOfRange(
                f"label {self.class_index} >= class count {n_classes}", field="label"
            )


@dataclass(frozen=True)
class ClinicalRecord:
    """One fundus-annotation instance."""

    id: str
    fundus: FundusFeatures = field(default_factory=FundusFeatures)
    judgment: Optional[HumanJudgment] = None
    image_ref: Optional[str] = None
    label: Optional[Label] = None

    def __post_init__(self):
        if not self.id:
            raise MalformedRecord("record id is empty")
        if self.image_ref is not None and not self.image_ref:
            raise MalformedRecord("image_ref present but empty", field="image_ref")

    @property
    def narrative_text(self) -> str:
        """Free-text portions, joined; empty string when none present."""
        parts = [t for t in (self.fundus.neuroretinal_rim,
                             self.fundus.additional_observations) if t]
        return " ".join(parts)


@dataclass(frozen=True)
class Measurement:
    """One biomarker row: right eye (od), left eye (os), inter-eye difference."""

    name: str
    od: float
    os: float
    ie: Optional[float] = None
    status_od: Optional[Status] = None
    status_os: Optional[Status] = None

    def check_ie(self) -> None:
        if self.ie is None:
            return
        tol = IE_RELATIVE_TOLERANCE * max(1.0, abs(self.od), abs(self.os))
        if abs(self.ie - (self.od - self.os)) > tol:
            raise InconsistentIE(
                f"{self.name}: ie={self.ie} != od-os={self.od - self.os}",
                field=self.name,
            )


@dataclass(frozen=True)
class OctBiomarkerRecord:
    """Per-subject OCT biomarker panel.

    ``judgment`` is allowed but not required: the private-style tables carry
    no risk/confidence columns, but nothing forbids attaching one.
    """

    id: str
    measurements: tuple[Measurement, ...] = ()
    image_ref: Optional[str] = None
    label: Optional[Label] = None
    judgment: Optional[HumanJudgment] = None

    def __post_init__(self):
        if not self.id:
            raise MalformedRecord("subject id is empty")
        names = [m.name for m in self.measurements]
        if len(set(names)) != len(names):
            raise MalformedTable(f"duplicate biomarker rows for subject {self.id}")


# ---------------------------------------------------------------------------
# Normative bounds catalog
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BiomarkerBounds:
    """Band edges for one biomarker.

    ``direction`` is ``"higher"`` when larger values are healthier (layer
    thicknesses, rim area) and ``"lower"`` when smaller values are healthier
    (cup ratios, cup volume, loss volumes).  For ``higher``::

        value >= normal_edge           -> WithinNormal
        borderline_edge <= value < ... -> Borderline
        value < borderline_edge        -> OutsideNormal

    and mirrored for ``lower``.  A value sitting exactly on an edge falls in
    the more-normal band.
    """

    name: str
    category: str  # RNFL | ONH | GCC
    unit: str
    direction: str  # "higher" | "lower"
    normal_edge: float
    borderline_edge: float

    def __post_init__(self):
        if self.direction not in ("higher", "lower"):
            raise ValueError(f"{self.name}: direction must be higher/lower")
        if self.direction == "higher" and not self.normal_edge > self.borderline_edge:
            raise ValueError(f"{self.name}: higher-direction edges must decrease")
        if self.direction == "lower" and not self.normal_edge < self.borderline_edge:
            raise ValueError(f"{self.name}: lower-direction edges must increase")

    def classify(self, value: float) -> Status:
        if self.direction == "higher":
            if value >= self.normal_edge:
                return Status.WITHIN_NORMAL
            if value >= self.borderline_edge:
                return Status.BORDERLINE
            return Status.OUTSIDE_NORMAL
        if value <= self.normal_edge:
            return Status.WITHIN_NORMAL
        if value <= self.borderline_edge:
            return Status.BORDERLINE
        return Status.OUTSIDE_NORMAL


BOUNDS_MAGIC = "GLABOUNDS"
BOUNDS_VERSION = 1


@dataclass(frozen=True)
class NormativeBounds:
    """Versioned catalog of biomarker band edges."""

    entries: Mapping[str, BiomarkerBounds]
    version: int = BOUNDS_VERSION

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __getitem__(self, name: str) -> BiomarkerBounds:
        try:
            return self.entries[name]
        except KeyError:
            raise MissingBounds(f"no normative bounds for biomarker {name!r}") from None

    def names(self) -> list[str]:
        return list(self.entries)


def classify_status(biomarker: str, value: float, bounds: NormativeBounds) -> Status:
    """Assign the tri-state status of one measurement value.

    Total over (cataloged biomarker, finite value); boundary values classify
    to the more-normal band.  Raises :class:`MissingBounds` for biomarkers
    absent from the catalog.
    """
    return bounds[biomarker].classify(value)


def load_bounds(path: Union[str, Path]) -> NormativeBounds:
    """Read a GLABOUNDS catalog file (tab-separated, versioned header)."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    return _parse_bounds(lines, file=str(path))


def _parse_bounds(lines: Sequence[str], file: str | None = None) -> NormativeBounds:
    if not lines:
        raise MalformedTable("empty bounds catalog", file=file, line=1)
    head = lines[0].split()
    if len(head) != 2 or head[0] != BOUNDS_MAGIC or not head[1].isdigit():
        raise MalformedTable(f"bad catalog header {lines[0]!r}", file=file, line=1)
    if int(head[1]) != BOUNDS_VERSION:
        raise MalformedTable(f"unsupported catalog version {head[1]}", file=file, line=1)
    entries: dict[str, BiomarkerBounds] = {}
    for i, raw in enumerate(lines[1:], start=2):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        cells = raw.split("\t")
        if len(cells) != 6:
            raise MalformedTable(f"expected 6 cells, got {len(cells)}", file=file, line=i)
        name, category, unit, direction, normal_edge, borderline_edge = (c.strip() for c in cells)
        if name in entries:
            raise MalformedTable(f"duplicate catalog entry {name!r}", file=file, line=i)
        try:
            entries[name] = BiomarkerBounds(
                name=name, category=category, unit=unit, direction=direction,
                normal_edge=float(normal_edge), borderline_edge=float(borderline_edge),
            )
        except ValueError as exc:
            raise MalformedTable(str(exc), file=file, line=i) from exc
    return NormativeBounds(entries=entries)


def save_bounds(bounds: NormativeBounds, path: Union[str, Path]) -> None:
    lines = [f"{BOUNDS_MAGIC} {bounds.version}",
             "# biomarker\tcategory\tunit\tdirection\tnormal_edge\tborderline_edge"]
    for entry in bounds.entries.values():
        lines.append("\t".join([
            entry.name, entry.category, entry.unit, entry.direction,
            repr(entry.normal_edge), repr(entry.borderline_edge),
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def default_bounds() -> NormativeBounds:
    """Packaged desk-scale catalog.

    The edges are placeholders chosen so the documented sample subject
    classifies sensibly (average thickness normal, average GCC borderline,
    superior GCC outside normal); real deployments should ship their own
    device-specific catalog file.
    """
    text = (importlib.resources.files("glarisk.data") / "normative_bounds.tsv").read_text("utf-8")
    return _parse_bounds(text.splitlines(), file="<packaged normative_bounds.tsv>")


# ---------------------------------------------------------------------------
# Label policy
# ---------------------------------------------------------------------------

# Risk ladder, mildest first.  Categories at or above "high risk" map to the
# positive class under the default policy.
RISK_LADDER = (
    "very healthy",
    "healthy",
    "low risk",
    "moderate risk",
    "high risk",
    "very high risk",
)


@dataclass(frozen=True)
class LabelPolicy:
    """Mapping from risk-assessment categories to class indices."""

    mapping: Mapping[str, int]

    @classmethod
    def default(cls) -> "LabelPolicy":
        threshold = RISK_LADDER.index("high risk")
        return cls(mapping={c: int(i >= threshold) for i, c in enumerate(RISK_LADDER)})

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, int]) -> "LabelPolicy":
        return cls(mapping=dict(mapping))


def derive_label(judgment: HumanJudgment, policy: LabelPolicy) -> Label:
    """Turn a risk assessment into a label (source ``derived-from-risk``)."""
    if judgment is None or judgment.risk_assessment is None:
        raise UnmappedCategory("no risk assessment to derive a label from")
    category = judgment.risk_assessment
    if category not in policy.mapping:
        raise UnmappedCategory(f"risk category {category!r} not in label policy")
    return Label(class_index=policy.mapping[category], source="derived-from-risk")


# ---------------------------------------------------------------------------
# Clinical record parsing
# ---------------------------------------------------------------------------

_FUNDUS_KEYS = frozenset(
    ("optic_disc_size", "cup_to_disc_ratio", "rim_color",
     "additional_observations", "neuroretinal_rim") + BOOLEAN_FUNDUS_FIELDS
)
_JUDGMENT_KEYS = frozenset(("glaucoma_risk_assessment", "confidence_level"))
_META_KEYS = frozenset(("image_ref", "label"))
KNOWN_CLINICAL_KEYS = _FUNDUS_KEYS | _JUDGMENT_KEYS | _META_KEYS


def _parse_bool(text: str, key: str, file, line) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise MalformedRecord(f"expected boolean, got {text!r}", file=file, line=line, field=key)


def _parse_float(text: str, key: str, file, line) -> float:
    try:
        return float(text)
    except ValueError:
        raise MalformedRecord(f"expected number, got {text!r}",
                              file=file, line=line, field=key) from None


def parse_clinical_record(raw: str, *, file: str | None = None,
                          first_line: int = 1,
                          n_classes: int | None = None) -> ClinicalRecord:
    """Parse one ``record ... end`` block into a :class:`ClinicalRecord`.

    Recognized fields are populated, absent fields stay missing, and any
    unrecognized key is rejected by name.  ``n_classes``, when given, bounds
    the label's class index.
    """
    lines = raw.splitlines()
    record_id = None
    seen: dict[str, tuple[str, int]] = {}
    closed = False
    for offset, rawline in enumerate(lines):
        lineno = first_line + offset
        text = rawline.strip()
        if not text or text.startswith("#"):
            continue
        if record_id is None:
            parts = text.split()
            if len(parts) != 2 or parts[0] != "record":
                raise MalformedRecord(f"expected 'record <id>', got {text!r}",
                                      file=file, line=lineno)
            record_id = parts[1]
            continue
        if text == "end":
            closed = True
            break
        if ":" not in text:
            raise MalformedRecord(f"expected 'key: value', got {text!r}",
                                  file=file, line=lineno)
        key, _, value = text.partition(":")
        key = key.strip()
        value = value.strip()
        if key not in KNOWN_CLINICAL_KEYS:
            raise UnknownField(f"unknown field {key!r}", file=file, line=lineno, field=key)
        if key in seen:
            raise MalformedRecord(f"duplicate field {key!r}", file=file, line=lineno, field=key)
        seen[key] = (value, lineno)
    if record_id is None:
        raise MalformedRecord("empty record block", file=file, line=first_line)
    if not closed:
        raise MalformedRecord(f"record {record_id!r} missing 'end'",
                              file=file, line=first_line)

    def take(key: str) -> tuple[str, int] | None:
        entry = seen.get(key)
        if entry is None or entry[0].lower() == "null" or entry[0] == "":
            return None
        return entry

    fundus_kwargs = {}
    for key in _FUNDUS_KEYS:
        entry = take(key)
        if entry is None:
            continue
        value, lineno = entry
        if key in BOOLEAN_FUNDUS_FIELDS:
            fundus_kwargs[key] = _parse_bool(value, key, file, lineno)
        elif key == "cup_to_disc_ratio":
            fundus_kwargs[key] = _parse_float(value, key, file, lineno)
        else:
            fundus_kwargs[key] = value
    try:
        fundus = FundusFeatures(**fundus_kwargs)
    except OutOfRange as exc:
        lineno = seen.get(exc.field, (None, None))[1] if exc.field else None
        raise OutOfRange(str(exc), file=file, line=lineno, field=exc.field) from None

    judgment = None
    risk = take("glaucoma_risk_assessment")
    conf = take("confidence_level")
    if risk is not None or conf is not None:
        try:
            judgment = HumanJudgment(
                risk_assessment=risk[0] if risk else None,
                confidence_level=_parse_float(conf[0], "confidence_level", file, conf[1])
                if conf else None,
            )
        except OutOfRange as exc:
            raise OutOfRange(str(exc), file=file,
                             line=conf[1] if conf else None,
                             field="confidence_level") from None

    label = None
    label_entry = take("label")
    if label_entry is not None:
        value, lineno = label_entry
        try:
            index = int(value)
        except ValueError:
            raise MalformedRecord(f"expected integer label, got {value!r}",
                                  file=file, line=lineno, field="label") from None
        label = Label(class_index=index)
        if n_classes is not None:
            try:
                label.check_range(n_classes)
            except OutOfRange as exc:
                raise OutOfRange(str(exc), file=file, line=lineno, field="label") from None

    image_entry = take("image_ref")
    return ClinicalRecord(
        id=record_id,
        fundus=fundus,
        judgment=judgment,
        image_ref=image_entry[0] if image_entry else None,
        label=label,
    )


def iter_clinical_blocks(text: str) -> Iterator[tuple[str, int]]:
    """Split a multi-record file into (block text, first line number) pairs."""
    block: list[str] = []
    start = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not block:
            if not stripped or stripped.startswith("#"):
                continue
            start = lineno
        block.append(line)
        if stripped == "end":
            yield "\n".join(block), start
            block, start = [], None
    if block:
        yield "\n".join(block), start


def parse_clinical_file(path: Union[str, Path],
                        n_classes: int | None = None) -> list[ClinicalRecord]:
    """Parse all records in a file; ids must be unique."""
    path = Path(path)
    records = []
    ids = set()
    for block, start in iter_clinical_blocks(path.read_text(encoding="utf-8")):
        record = parse_clinical_record(block, file=str(path), first_line=start,
                                       n_classes=n_classes)
        if record.id in ids:
            raise MalformedRecord(f"duplicate record id {record.id!r}",
                                  file=str(path), line=start)
        ids.add(record.id)
        records.append(record)
    return records


def serialize_clinical_record(record: ClinicalRecord) -> str:
    """Canonical text form; ``parse(serialize(r)) == r`` field for field."""
    lines = [f"record {record.id}"]
    values: dict[str, object] = {f.name: getattr(record.fundus, f.name)
                                 for f in fields(record.fundus)}
    if record.judgment is not None:
        values["glaucoma_risk_assessment"] = record.judgment.risk_assessment
        values["confidence_level"] = record.judgment.confidence_level
    values["image_ref"] = record.image_ref
    values["label"] = record.label.class_index if record.label else None
    for key in CLINICAL_FIELD_ORDER:
        value = values.get(key)
        if value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key}: {value}")
    lines.append("end")
    return "\n".join(lines)


def write_clinical_file(records: Iterable[ClinicalRecord], path: Union[str, Path]) -> None:
    text = "\n\n".join(serialize_clinical_record(r) for r in records)
    Path(path).write_text(text + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Biomarker table parsing
# ---------------------------------------------------------------------------

TABLE_HEADER = ("biomarker", "od", "os", "ie")
_UNDEFINED_IE = ("n/a", "na", "")


def parse_biomarker_table(raw: str, bounds: NormativeBounds | None = None, *,
                          file: str | None = None,
                          n_classes: int | None = None) -> list[OctBiomarkerRecord]:
    """Parse a tab-separated biomarker table into per-subject records.

    Every measurement ends up with per-eye statuses: taken from the two
    optional trailing cells when present, otherwise assigned through
    :func:`classify_status` against ``bounds`` (the packaged catalog by
    default).
    """
    if bounds is None:
        bounds = default_bounds()
    lines = raw.splitlines()
    header_seen = False
    subjects: list[OctBiomarkerRecord] = []
    ids: set[str] = set()
    current_id: str | None = None
    current_meta: dict[str, str] = {}
    current_rows: list[Measurement] = []

    def flush(lineno: int) -> None:
        nonlocal current_id, current_meta, current_rows
        if current_id is None:
            return
        label = None
        if "label" in current_meta:
            try:
                label = Label(class_index=int(current_meta["label"]))
            except ValueError:
                raise MalformedTable(f"bad label {current_meta['label']!r}",
                                     file=file, line=lineno, field="label") from None
            if n_classes is not None:
                label.check_range(n_classes)
        subjects.append(OctBiomarkerRecord(
            id=current_id,
            measurements=tuple(current_rows),
            image_ref=current_meta.get("image_ref"),
            label=label,
        ))
        current_id, current_meta, current_rows = None, {}, []

    for lineno, rawline in enumerate(lines, start=1):
        text = rawline.strip()
        if not text or text.startswith("#"):
            continue
        cells = [c.strip() for c in rawline.split("\t")]
        if not header_seen:
            if tuple(c.lower() for c in cells) != TABLE_HEADER:
                raise MalformedTable(
                    f"expected header {' '.join(TABLE_HEADER)!r}, got {text!r}",
                    file=file, line=lineno)
            header_seen = True
            continue
        if cells[0] == "@subject":
            flush(lineno)
            if len(cells) < 2 or not cells[1]:
                raise MalformedTable("@subject line missing id", file=file, line=lineno)
            current_id = cells[1]
            if current_id in ids:
                raise MalformedTable(f"duplicate subject id {current_id!r}",
                                     file=file, line=lineno)
            ids.add(current_id)
            for extra in cells[2:]:
                if "=" not in extra:
                    raise MalformedTable(f"bad subject attribute {extra!r}",
                                         file=file, line=lineno)
                key, _, value = extra.partition("=")
                if key not in ("label", "image_ref"):
                    raise MalformedTable(f"unknown subject attribute {key!r}",
                                         file=file, line=lineno, field=key)
                current_meta[key] = value
            continue
        if current_id is None:
            raise MalformedTable("measurement row before any @subject line",
                                 file=file, line=lineno)
        if len(cells) not in (4, 6):
            raise MalformedTable(f"expected 4 or 6 cells, got {len(cells)}",
                                 file=file, line=lineno)
        name = cells[0]
        if name not in bounds:
            raise UnknownBiomarker(f"biomarker {name!r} not in catalog",
                                   file=file, line=lineno, field=name)
        try:
            od, os_ = float(cells[1]), float(cells[2])
        except ValueError:
            raise MalformedTable(f"bad numeric cell in {text!r}",
                                 file=file, line=lineno, field=name) from None
        ie: Optional[float]
        if cells[3].lower() in _UNDEFINED_IE:
            ie = None
        else:
            try:
                ie = float(cells[3])
            except ValueError:
                raise MalformedTable(f"bad ie cell {cells[3]!r}",
                                     file=file, line=lineno, field=name) from None
        if not all(math.isfinite(v) for v in (od, os_) + (() if ie is None else (ie,))):
            raise MalformedTable(f"non-finite measurement in {text!r}",
                                 file=file, line=lineno, field=name)
        if len(cells) == 6:
            try:
                status_od, status_os = Status.parse(cells[4]), Status.parse(cells[5])
            except ValueError as exc:
                raise MalformedTable(str(exc), file=file, line=lineno, field=name) from None
        else:
            status_od = classify_status(name, od, bounds)
            status_os = classify_status(name, os_, bounds)
        measurement = Measurement(name=name, od=od, os=os_, ie=ie,
                                  status_od=status_od, status_os=status_os)
        try:
            measurement.check_ie()
        except InconsistentIE as exc:
            raise InconsistentIE(str(exc), file=file, line=lineno, field=name) from None
        current_rows.append(measurement)
    if not header_seen:
        raise MalformedTable("missing header row", file=file, line=1)
    flush(len(lines))
    return subjects


def parse_biomarker_file(path: Union[str, Path],
                         bounds: NormativeBounds | None = None,
                         n_classes: int | None = None) -> list[OctBiomarkerRecord]:
    path = Path(path)
    return parse_biomarker_table(path.read_text(encoding="utf-8"), bounds,
                                 file=str(path), n_classes=n_classes)


def serialize_biomarker_table(records: Iterable[OctBiomarkerRecord]) -> str:
    """Canonical table text, explicit statuses included for round-tripping."""
    lines = ["\t".join(TABLE_HEADER)]
    for record in records:
        cells = ["@subject", record.id]
        if record.label is not None:
            cells.append(f"label={record.label.class_index}")
        if record.image_ref is not None:
            cells.append(f"image_ref={record.image_ref}")
        lines.append("\t".join(cells))
        for m in record.measurements:
            ie_text = "N/A" if m.ie is None else repr(m.ie)
            lines.append("\t".join([m.name, repr(m.od), repr(m.os), ie_text,
                                    m.status_od.value, m.status_os.value]))
    return "\n".join(lines) + "\n"


def write_biomarker_file(records: Iterable[OctBiomarkerRecord],
                         path: Union[str, Path]) -> None:
    Path(path).write_text(serialize_biomarker_table(records), encoding="utf-8")
