"""Command-line exporter: manifest in, GLAEMB tables out.

The manifest is tab-separated ``id<TAB>image path<TAB>text`` (either cell
may be empty).  Exit codes: 0 success, 2 usage, 3 bad manifest, 4 missing
weights.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .images import export_image_embeddings
from .job import BadManifest, ExportJob, MissingWeights, read_manifest
from .texts import export_text_embeddings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glarisk-export",
        description="Export image/text embedding tables (GLAEMB v1) from "
                    "pretrained encoders.")
    parser.add_argument("manifest", help="tab-separated id/image-path/text manifest")
    parser.add_argument("--images-out", default=None,
                        help="write image embeddings here (default: skip images)")
    parser.add_argument("--texts-out", default=None,
                        help="write text embeddings here (default: skip texts)")
    parser.add_argument("--depth", type=int, default=152,
                        choices=(18, 34, 50, 101, 152),
                        help="residual network depth (default: 152)")
    parser.add_argument("--text-model", default="bert-base-multilingual-cased",
                        help="pretrained text encoder name "
                             "(default: bert-base-multilingual-cased)")
    parser.add_argument("--no-pretrained", dest="pretrained", action="store_false",
                        help="seeded random initialization instead of "
                             "pretrained weights (default: pretrained)")
    parser.add_argument("--augment", action="store_true",
                        help="training-style image augmentation: random flip "
                             "and color jitter; output is then stochastic "
                             "(default: off)")
    parser.add_argument("--trainable-head", action="store_true",
                        help="mark the image head as fine-tunable for "
                             "downstream training; encoders stay frozen "
                             "during export (default: frozen)")
    parser.add_argument("--max-len", type=int, default=128,
                        help="text truncation/padding length (default: 128)")
    parser.add_argument("--batch-size", type=int, default=16,
                        help="inference batch size (default: 16)")
    parser.add_argument("--device", default="cpu",
                        help="torch device (default: cpu)")
    parser.add_argument("--seed", type=int, default=42,
                        help="seed for random initialization (default: 42)")
    parser.add_argument("--text-hidden", type=int, default=128,
                        help="hidden size of the seeded random text encoder "
                             "(default: 128)")
    parser.add_argument("--text-layers", type=int, default=2,
                        help="layers of the seeded random text encoder "
                             "(default: 2)")
    parser.add_argument("--strip-boilerplate", action="append", default=[],
                        metavar="PHRASE",
                        help="remove this phrase from texts before encoding "
                             "(repeatable; default: none)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.images_out and not args.texts_out:
        print("error: need --images-out and/or --texts-out", file=sys.stderr)
        return 2
    try:
        entries = read_manifest(Path(args.manifest))
        job = ExportJob(
            entries=entries,
            images_out=Path(args.images_out) if args.images_out else None,
            texts_out=Path(args.texts_out) if args.texts_out else None,
            resnet_depth=args.depth,
            text_model=args.text_model,
            pretrained=args.pretrained,
            augment=args.augment,
            trainable_head=args.trainable_head,
            max_text_length=args.max_len,
            batch_size=args.batch_size,
            device=args.device,
            seed=args.seed,
            text_hidden=args.text_hidden,
            text_layers=args.text_layers,
            strip_boilerplate=tuple(args.strip_boilerplate),
        )
        if job.images_out is not None:
            n = export_image_embeddings(job)
            print(f"images\t{job.images_out}\t{n}")
        if job.texts_out is not None:
            n = export_text_embeddings(job)
            print(f"texts\t{job.texts_out}\t{n}")
    except BadManifest as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except MissingWeights as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
