"""Command-line tool: features, segment, finetune."""

from __future__ import annotations

import argparse
import sys

from .features import extract_features
from .finetune import FineTuneSchedule, finetune_and_export
from .segment import segment_images


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svextract",
        description="extract backbone features, segmentation masks and "
        "fine-tuned embeddings from facade images",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    feat = sub.add_parser("features", help="pooled backbone feature vectors")
    feat.add_argument("--images", required=True)
    feat.add_argument(
        "--backbone",
        required=True,
        choices=("resnet18", "resnet50", "resnet101", "densenet121"),
    )
    feat.add_argument("--out", required=True)
    feat.add_argument("--pretrained", action="store_true")
    feat.add_argument("--weights")
    feat.add_argument("--seed", type=int, default=0)
    feat.add_argument("--batch-size", type=int, default=16)

    seg = sub.add_parser("segment", help="per-pixel category masks + vocabulary")
    seg.add_argument("--images", required=True)
    seg.add_argument("--out", required=True)
    seg.add_argument("--weights")
    seg.add_argument("--seed", type=int, default=0)
    seg.add_argument("--max-side", type=int, default=None)

    fine = sub.add_parser("finetune", help="train the complete approach, export embeddings")
    fine.add_argument("--images", required=True)
    fine.add_argument("--assessment", required=True)
    fine.add_argument(
        "--backbone",
        required=True,
        choices=("resnet18", "resnet50", "resnet101", "densenet121"),
    )
    fine.add_argument("--size", type=int, required=True)
    fine.add_argument("--out", required=True)
    fine.add_argument("--pretrained", action="store_true")
    fine.add_argument("--weights")
    fine.add_argument("--epochs", type=int, default=25)
    fine.add_argument("--lr", type=float, default=1e-4)
    fine.add_argument("--decay-factor", type=float, default=0.1)
    fine.add_argument("--decay-every", type=int, default=5)
    fine.add_argument("--batch-size", type=int, default=32)
    fine.add_argument("--seed", type=int, default=0)
    fine.add_argument("--image-size", type=int, default=224)
    fine.add_argument("--evaluation-year", type=int, default=2018)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "features":
        manifest = extract_features(
            args.images,
            args.backbone,
            args.out,
            pretrained=args.pretrained,
            weights_path=args.weights,
            seed=args.seed,
            batch_size=args.batch_size,
        )
        print(
            f"features: {manifest['images']} images x {manifest['d_feat']} "
            f"({manifest['weights']}); skipped {len(manifest['skipped'])}"
        )
    elif args.command == "segment":
        manifest = segment_images(
            args.images,
            args.out,
            weights_path=args.weights,
            seed=args.seed,
            max_side=args.max_side,
        )
        print(
            f"segment: {manifest['masks']} masks over "
            f"{manifest['categories']} categories ({manifest['weights']})"
        )
    elif args.command == "finetune":
        schedule = FineTuneSchedule(
            epochs=args.epochs,
            initial_lr=args.lr,
            decay_factor=args.decay_factor,
            decay_every=args.decay_every,
            batch_size=args.batch_size,
            seed=args.seed,
        )
        manifest = finetune_and_export(
            args.images,
            args.assessment,
            args.backbone,
            args.size,
            args.out,
            schedule=schedule,
            pretrained=args.pretrained,
            weights_path=args.weights,
            evaluation_year=args.evaluation_year,
            image_size=args.image_size,
        )
        print(
            f"finetune: loss {manifest['initial_loss']:.4f} -> "
            f"{manifest['final_loss']:.4f}; wrote {manifest['output']}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
