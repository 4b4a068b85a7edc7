"""export-features: write frozen-backbone feature corpora for image folders."""

from __future__ import annotations

import argparse
import sys
import time

from .export import ExportError, ExportJob, export_corpus, layer_shapes


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="export-features", description=__doc__)
    parser.add_argument("--backbone", default="resnet18",
                        help="resnet18 or efficientnet-b0..b6")
    parser.add_argument("--layers",
                        help="comma-separated tap points (default: backbone's "
                             "standard set)")
    parser.add_argument("--in", dest="input_dir", required=True,
                        help="class directory with train/ and test/ images")
    parser.add_argument("--out", dest="output_dir", required=True)
    parser.add_argument("--weights", choices=("pretrained", "random"),
                        default="pretrained",
                        help="random = seeded init for offline use")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--class-name", default="")
    parser.add_argument("--print-shapes", action="store_true",
                        help="run one verification pass and print layer shapes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(
            backbone=args.backbone,
            layers=tuple(args.layers.split(",")) if args.layers else (),
            input_dir=args.input_dir,
            output_dir=args.output_dir,
            pretrained=args.weights == "pretrained",
            seed=args.seed,
            batch_size=args.batch_size,
            device=args.device,
            class_name=args.class_name,
        )
        if args.print_shapes:
            for name, shape in layer_shapes(job).items():
                print(f"{name}: {shape}")
            return 0
        t0 = time.perf_counter()
        manifests = export_corpus(job)
        for split, path in sorted(manifests.items()):
            print(f"{split}: {path}")
        print(f"done in {time.perf_counter() - t0:.1f}s")
        return 0
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
