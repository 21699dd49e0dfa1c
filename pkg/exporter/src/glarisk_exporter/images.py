"""Fundus-image embeddings from a residual network's penultimate layer.

Preprocessing: resize to 224x224, normalize with ImageNet channel means and
standard deviations; optional training-style augmentation (random horizontal
flip and color jitter) is off by default, so evaluation-mode exports are
deterministic.  Convolutional layers stay frozen; only provenance records
whether a downstream consumer may fine-tune the head.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path
from typing import Optional

import torch
from PIL import Image, UnidentifiedImageError
from torchvision import models, transforms

from .glaemb import write_glaemb
from .job import ExportJob, MissingWeights

logger = logging.getLogger("glarisk_exporter.images")

RESNET_BUILDERS = {
    18: (models.resnet18, "ResNet18_Weights"),
    34: (models.resnet34, "ResNet34_Weights"),
    50: (models.resnet50, "ResNet50_Weights"),
    101: (models.resnet101, "ResNet101_Weights"),
    152: (models.resnet152, "ResNet152_Weights"),
}

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def build_image_encoder(depth: int, pretrained: bool, seed: int,
                        device: str) -> tuple[torch.nn.Module, int]:
    """Backbone without its classification layer; returns (module, out dim)."""
    if depth not in RESNET_BUILDERS:
        raise MissingWeights(f"unsupported residual depth {depth}; "
                             f"choose from {sorted(RESNET_BUILDERS)}")
    builder, weights_attr = RESNET_BUILDERS[depth]
    if pretrained:
        try:
            weights = getattr(models, weights_attr).IMAGENET1K_V1
            net = builder(weights=weights)
        except Exception as exc:
            raise MissingWeights(
                f"pretrained weights for depth {depth} unavailable ({exc}); "
                "pass --no-pretrained for a seeded random initialization"
            ) from exc
    else:
        torch.manual_seed(seed)
        net = builder(weights=None)
    dim = net.fc.in_features  # penultimate width (512 or 2048)
    net.fc = torch.nn.Identity()
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)
    return net.to(device), dim


def build_preprocess(augment: bool) -> transforms.Compose:
    steps = [transforms.Resize((224, 224))]
    if augment:
        steps += [transforms.RandomHorizontalFlip(),
                  transforms.ColorJitter(brightness=0.2, contrast=0.2,
                                         saturation=0.1)]
    steps += [transforms.ToTensor(),
              transforms.Normalize(IMAGENET_MEAN, IMAGENET_STD)]
    return transforms.Compose(steps)


def _load_image(path: Path) -> Optional[Image.Image]:
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except (OSError, UnidentifiedImageError) as exc:
        logger.warning("skipping undecodable image %s (%s)", path, exc)
        return None


def export_image_embeddings(job: ExportJob) -> int:
    """Encode every manifest image and write the GLAEMB table.

    Undecodable images are skipped with a report; the header count equals
    manifest images minus skips.  Returns the number of exported rows.
    """
    entries = job.image_entries()
    if job.images_out is None:
        raise ValueError("job has no image output path")
    torch.set_num_threads(1)  # keep CPU reductions run-to-run identical
    encoder, dim = build_image_encoder(job.resnet_depth, job.pretrained,
                                       job.seed, job.device)
    preprocess = build_preprocess(job.augment)
    rows: list[tuple[str, list[float]]] = []
    skipped = 0
    batch_ids: list[str] = []
    batch_tensors: list[torch.Tensor] = []

    def flush():
        nonlocal batch_ids, batch_tensors
        if not batch_ids:
            return
        with torch.no_grad():
            out = encoder(torch.stack(batch_tensors).to(job.device))
        for rid, vec in zip(batch_ids, out.cpu()):
            rows.append((rid, vec.tolist()))
        batch_ids, batch_tensors = [], []

    for entry in entries:
        image = _load_image(entry.image_path)
        if image is None:
            skipped += 1
            continue
        batch_ids.append(entry.id)
        batch_tensors.append(preprocess(image))
        if len(batch_ids) >= job.batch_size:
            flush()
    flush()
    count = write_glaemb(rows, dim, job.images_out)
    if skipped:
        print(f"skipped {skipped} undecodable image(s)", file=sys.stderr)
    logger.info("wrote %d image vectors (dim %d, depth %d, %s) to %s",
                count, dim, job.resnet_depth,
                "pretrained" if job.pretrained else f"seeded init {job.seed}",
                job.images_out)
    return count
