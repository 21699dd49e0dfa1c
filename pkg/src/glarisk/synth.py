"""Deterministic multimodal synthetic dataset for desk-scale runs.

Each instance draws three latent factors (structured, textual, visual); the
label is the sign of their weighted sum, with near-boundary draws rejected
so the classes are learnably separated.  Every modality then observes its
own latent only:

* fundus fields (disc size, cup-to-disc ratio, rim booleans) are noisy views
  of the structured latent,
* the narrative is sampled from pathological/healthy token pools with
  mixture driven by the textual latent,
* the image is a disc/cup blob whose cup radius follows the visual latent,
* the judgment (risk category + confidence) is a noisy view of the full
  score, so ablating it degrades gracefully.

Embeddings come from the stand-in encoders, keyed by record id (text) and
image_ref (image).  Identical (rows, seed, dims) always produce identical
files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .embeddings import (
    EmbeddingTable,
    stand_in_image_encoder,
    stand_in_text_encoder,
    write_embedding_table,
)
from .records import (
    ClinicalRecord,
    FundusFeatures,
    HumanJudgment,
    Label,
    RISK_LADDER,
    write_clinical_file,
)

# Latent mixture: struct carries most signal, text and image split the rest.
W_STRUCT, W_TEXT, W_IMAGE = 1.25, 0.75, 0.75
SCORE_MARGIN = 0.5  # reject draws with |score| below this

TEXT_SEED = 7
IMAGE_SEED = 11

POS_TOKENS = ("thinning", "notching", "pallor", "excavation", "asymmetric",
              "bayoneting", "undermined", "saucerized", "eroded", "cupped")
NEG_TOKENS = ("intact", "healthy", "pink", "uniform", "distinct",
              "regular", "stable", "robust", "preserved", "symmetric")
NEUTRAL_TOKENS = ("rim", "margin")
TOKENS_PER_TEXT = 14

IMAGE_SIDE = 24
RIM_COLORS = ("pink", "temporal pallor", "pale")


@dataclass(frozen=True)
class SynthDataset:
    records: tuple[ClinicalRecord, ...]
    text_table: EmbeddingTable
    image_table: EmbeddingTable


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _draw_latents(rng: np.random.Generator, n: int):
    zs = np.empty(n)
    zt = np.empty(n)
    zi = np.empty(n)
    score = np.empty(n)
    pending = np.arange(n)
    while pending.size:
        a = rng.standard_normal(pending.size)
        b = rng.standard_normal(pending.size)
        c = rng.standard_normal(pending.size)
        s = W_STRUCT * a + W_TEXT * b + W_IMAGE * c
        keep = np.abs(s) >= SCORE_MARGIN
        idx = pending[keep]
        zs[idx], zt[idx], zi[idx] = a[keep], b[keep], c[keep]
        score[idx] = s[keep]
        pending = pending[~keep]
    return zs, zt, zi, score


def _fundus(rng: np.random.Generator, z: float, narrative: str) -> FundusFeatures:
    def maybe(value, p_missing):
        return None if rng.random() < p_missing else value

    cdr = float(np.clip(0.55 + 0.16 * z + 0.03 * rng.standard_normal(), 0.02, 0.98))
    u = z + 0.4 * rng.standard_normal()
    size = "large" if u > 0.8 else ("small" if u < -0.8 else "normal")
    color_u = z + 0.5 * rng.standard_normal()
    color = RIM_COLORS[2] if color_u > 0.7 else (RIM_COLORS[0] if color_u < -0.2 else RIM_COLORS[1])
    offsets = np.linspace(-0.5, 0.5, 7)
    flags = [bool(rng.random() < _sigmoid(2.2 * z + o)) for o in offsets]
    return FundusFeatures(
        optic_disc_size=maybe(size, 0.05),
        cup_to_disc_ratio=maybe(cdr, 0.06),
        isnt_rule_followed=maybe(not flags[0], 0.04),  # rule holds when healthy
        rim_pallor=maybe(flags[1], 0.04),
        rim_color=maybe(color, 0.08),
        bayoneting=maybe(flags[2], 0.04),
        sharp_edge=maybe(flags[3], 0.04),
        laminar_dot_sign=maybe(flags[4], 0.04),
        notching=maybe(flags[5], 0.04),
        rim_thinning=maybe(flags[6], 0.04),
        neuroretinal_rim=narrative,
    )


def _narrative(rng: np.random.Generator, z: float) -> str:
    p = _sigmoid(2.5 * z)
    k = int(rng.binomial(TOKENS_PER_TEXT, p))
    tokens = list(rng.choice(POS_TOKENS, size=k, replace=True))
    tokens += list(rng.choice(NEG_TOKENS, size=TOKENS_PER_TEXT - k, replace=True))
    tokens += list(NEUTRAL_TOKENS)
    rng.shuffle(tokens)
    return " ".join(tokens)


def _judgment(rng: np.random.Generator, score: float) -> HumanJudgment | None:
    if rng.random() < 0.03:
        return None
    r = score + 0.55 * rng.standard_normal()
    edges = (-1.5, -0.5, 0.0, 0.5, 1.5)
    category = RISK_LADDER[int(np.searchsorted(edges, r, side="right"))]
    confidence = float(np.clip(0.5 + 0.25 * abs(score) / 1.5
                               + 0.08 * rng.standard_normal(), 0.0, 1.0))
    return HumanJudgment(risk_assessment=category, confidence_level=confidence)


def _image(rng: np.random.Generator, z: float) -> np.ndarray:
    side = IMAGE_SIDE
    img = 0.15 + 0.02 * rng.standard_normal((side, side))
    yy, xx = np.mgrid[0:side, 0:side]
    center = (side - 1) / 2.0
    dist = np.hypot(yy - center, xx - center)
    img[dist <= 8.0] = 0.55
    cup_radius = 2.0 + 3.0 * _sigmoid(1.8 * z)
    img[dist <= cup_radius] = 0.95
    img += 0.02 * rng.standard_normal((side, side))
    return np.clip(img, 0.0, 1.0)


def generate(rows: int = 2000, seed: int = 42, d_text: int = 64,
             d_img: int = 128) -> SynthDataset:
    """Build the records plus both embedding tables in one pass."""
    rng = np.random.Generator(np.random.PCG64(seed))
    zs, zt, zi, score = _draw_latents(rng, rows)
    records = []
    text_entries: dict[str, np.ndarray] = {}
    image_entries: dict[str, np.ndarray] = {}
    for i in range(rows):
        rid = f"r{i:05d}"
        narrative = _narrative(rng, zt[i])
        fundus = _fundus(rng, zs[i], narrative)
        has_image = rng.random() >= 0.02  # a few records lack imaging
        image_ref = f"img_{rid}" if has_image else None
        record = ClinicalRecord(
            id=rid,
            fundus=fundus,
            judgment=_judgment(rng, score[i]),
            image_ref=image_ref,
            label=Label(class_index=int(score[i] > 0)),
        )
        records.append(record)
        text_entries[rid] = stand_in_text_encoder(narrative, d_text, TEXT_SEED)
        if has_image:
            image_entries[image_ref] = stand_in_image_encoder(
                _image(rng, zi[i]), d_img, IMAGE_SEED)
    return SynthDataset(
        records=tuple(records),
        text_table=EmbeddingTable(dim=d_text, entries=text_entries,
                                  provenance="stand-in text encoder"),
        image_table=EmbeddingTable(dim=d_img, entries=image_entries,
                                   provenance="stand-in image encoder"),
    )


def write(dataset: SynthDataset, out_dir: Union[str, Path]) -> dict[str, Path]:
    """Write records + embedding tables; returns the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "records": out / "records.txt",
        "text": out / "text.glaemb",
        "image": out / "image.glaemb",
    }
    write_clinical_file(dataset.records, paths["records"])
    write_embedding_table(dataset.text_table, paths["text"])
    write_embedding_table(dataset.image_table, paths["image"])
    return paths
