"""Export job description and manifest parsing."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional


class ExporterError(Exception):
    pass


class MissingWeights(ExporterError):
    """Pretrained weights were requested but cannot be loaded."""


class BadManifest(ExporterError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    image_path: Optional[Path]
    text: Optional[str]


@dataclass(frozen=True)
class ExportJob:
    """Everything one export run needs.

    ``pretrained=False`` swaps downloaded weights for a seeded random
    initialization; the run stays deterministic in evaluation mode either
    way.  ``trainable_head`` only marks the provenance (encoders are frozen
    during export; training them is out of scope here).
    """

    entries: tuple[ManifestEntry, ...]
    images_out: Optional[Path] = None
    texts_out: Optional[Path] = None
    resnet_depth: int = 152
    text_model: str = "bert-base-multilingual-cased"
    pretrained: bool = True
    augment: bool = False
    trainable_head: bool = False
    max_text_length: int = 128
    batch_size: int = 16
    device: str = "cpu"
    seed: int = 42
    text_layers: int = 2  # offline (random-init) text encoder size
    text_hidden: int = 128
    strip_boilerplate: tuple[str, ...] = ()

    def image_entries(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.image_path is not None]

    def text_entries(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.text is not None]


def read_manifest(path: Path) -> tuple[ManifestEntry, ...]:
    """Parse the tab-separated (id, image path, text) manifest.

    Empty cells mean "this modality is absent for this id"; ids must be
    unique.  Relative image paths resolve against the manifest's directory.
    """
    path = Path(path)
    root = path.parent
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(),
                                 start=1):
        if not raw.strip() or raw.startswith("#"):
            continue
        cells = raw.split("\t")
        if len(cells) != 3:
            raise BadManifest(f"{path}:{lineno}: expected 3 tab-separated cells, "
                              f"got {len(cells)}")
        rid, image_cell, text_cell = cells[0].strip(), cells[1].strip(), cells[2]
        if not rid:
            raise BadManifest(f"{path}:{lineno}: empty id")
        if rid in seen:
            raise BadManifest(f"{path}:{lineno}: duplicate id {rid!r}")
        seen.add(rid)
        image_path = None
        if image_cell:
            image_path = Path(image_cell)
            if not image_path.is_absolute():
                image_path = root / image_path
        entries.append(ManifestEntry(id=rid, image_path=image_path,
                                     text=text_cell if text_cell.strip() else None))
    if not entries:
        raise BadManifest(f"{path}: empty manifest")
    return tuple(entries)
