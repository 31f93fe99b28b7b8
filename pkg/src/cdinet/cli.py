"""
Command-line interface for CDINet.

Provides CLI commands for training, exporting saliency maps, evaluating
them, comparing the cost of the named variants and measuring speed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

import torch

from cdinet import __version__
from cdinet.config import DEFAULT_TARGET_SIZE, BackboneConfig, BackboneScale, ExperimentConfig
from cdinet.data import RGBDDataset, SampleEntry, discover_datasets, discover_manifest, make_split
from cdinet.exceptions import CDINetError
from cdinet.inference import benchmark_fps, checkpoint_target_size, export_saliency_maps, load_network
from cdinet.network import VARIANTS, Checkpoint, build_network, count_parameters, variant_config
from cdinet.report import MetricReport, evaluate_dataset, plot_pr_curves
from cdinet.trainer import train


def setup_logging(verbose: bool = False) -> None:
    """Configure logging based on verbosity."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(levelname)s - %(message)s",
    )


def _dataset_names(value: Optional[str], root: str) -> List[str]:
    if not value:
        return discover_datasets(root)
    return [name for name in value.split(",") if name]


def _split_entries(root: str, datasets: Optional[str], split: str) -> List[SampleEntry]:
    manifests = [discover_manifest(root, name) for name in _dataset_names(datasets, root)]
    if split == "all":
        return [entry for m in manifests for entry in m.entries]
    train_entries, test_entries = make_split(manifests)
    return train_entries if split == "train" else test_entries


def cmd_train(args: argparse.Namespace) -> int:
    """Train a network on the training portion of the given datasets."""
    setup_logging(args.verbose)

    try:
        # Load config
        if args.config:
            config = ExperimentConfig.from_file(args.config)
        else:
            config = ExperimentConfig.from_env()

        # Override with CLI args
        if args.epochs:
            config.train.total_epochs = args.epochs
        if args.device:
            config.train.device = args.device
        config.validate()

        train_entries = _split_entries(args.data_root, args.datasets, "train")
        train_set = RGBDDataset(
            train_entries,
            config.train.target_size,
            augment=config.train.augment,
            seed=config.train.seed,
        )
        val_set = None
        if args.val_datasets:
            val_entries = _split_entries(args.data_root, args.val_datasets, "test")
            val_set = RGBDDataset(val_entries, config.train.target_size)

        config.save(f"{args.out}/config.json")
        checkpoint = train(config.network, config.train, train_set, out_dir=args.out, val_data=val_set)
    except CDINetError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1

    print(f"Trained {checkpoint.epoch} epochs; checkpoint written to {args.out}/last.pt")
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    """Write saliency maps for every sample of a split."""
    setup_logging(args.verbose)

    try:
        entries = _split_entries(args.data_root, args.datasets, args.split)
        checkpoint = Checkpoint.load(args.checkpoint)
        net = load_network(checkpoint, device=args.device)
        target_size = args.size or checkpoint_target_size(checkpoint)
        written = export_saliency_maps(net, entries, args.out, target_size, device=args.device)
    except CDINetError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1

    print(f"Wrote {written} saliency maps to {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    """Score saliency maps against ground-truth masks."""
    setup_logging(args.verbose)

    preds: List[str] = args.pred
    gts: List[str] = args.gt
    names: List[Optional[str]] = list(args.name or [])
    if len(preds) != len(gts):
        print("Error: --pred and --gt must be given the same number of times", file=sys.stderr)
        return 1
    if names and len(names) != len(preds):
        print("Error: --name must be given once per --pred", file=sys.stderr)
        return 1
    names = names or [None] * len(preds)

    try:
        report = MetricReport()
        for pred_dir, gt_dir, name in zip(preds, gts, names):
            report = report.merge(
                evaluate_dataset(pred_dir, gt_dir, name=name, identifiers={"pred": pred_dir})
            )
        if len(preds) > 1:
            report.identifiers = {"pred": ",".join(preds)}
        report.save(args.out)
        if args.csv:
            report.save_csv(args.csv)
        if args.pr_plot:
            plot_pr_curves(report, args.pr_plot)
    except CDINetError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1

    for name, metrics in report.per_dataset.items():
        print(
            f"{name}: maxF {metrics.max_f:.4f}  S {metrics.s_measure:.4f}  "
            f"MAE {metrics.mae:.4f}  ({metrics.num_images} images)"
        )
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    """Build every named variant and print its trainable parameter count."""
    setup_logging(args.verbose)

    backbone = BackboneConfig(scale=args.scale)
    generator = torch.Generator().manual_seed(0)
    rgb = torch.rand(1, 3, args.size, args.size, generator=generator)
    depth = torch.rand(1, 3, args.size, args.size, generator=generator)

    try:
        for name in VARIANTS:
            net = build_network(variant_config(name, backbone))
            net.eval()
            with torch.no_grad():
                out = net(rgb, depth)
            print(f"{name:<16} {count_parameters(net):>12,d}  output {tuple(out.shape)}")
    except CDINetError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    """Measure forward passes per second."""
    setup_logging(args.verbose)

    try:
        if args.checkpoint:
            net = load_network(args.checkpoint, device=args.device)
        else:
            net = build_network(variant_config("cdinet", BackboneConfig(scale=args.scale)))
            net = net.to(torch.device(args.device))
        fps = benchmark_fps(net, size=args.size, iterations=args.iterations, device=args.device)
    except CDINetError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1

    print(f"{fps:.2f} FPS at {args.size}x{args.size}")
    return 0


def create_parser() -> argparse.ArgumentParser:
    """Create the argument parser."""
    parser = argparse.ArgumentParser(
        prog="cdinet",
        description="RGB-D salient object detection with cross-modality discrepant interaction",
    )
    parser.add_argument(
        "-v", "--verbose",
        action="store_true",
        help="Enable verbose output",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__}",
    )

    subparsers = parser.add_subparsers(dest="command", help="Commands")

    # train command
    train_parser = subparsers.add_parser(
        "train",
        help="Train a network",
    )
    train_parser.add_argument(
        "-c", "--config",
        help="Path to a flat JSON experiment file (defaults plus CDINET_* variables otherwise)",
    )
    train_parser.add_argument(
        "--data-root",
        required=True,
        help="Directory holding one folder per dataset",
    )
    train_parser.add_argument(
        "--datasets",
        help="Comma-separated dataset folder names (defaults to every dataset under --data-root)",
    )
    train_parser.add_argument(
        "-o", "--out",
        required=True,
        help="Output directory for checkpoints",
    )
    train_parser.add_argument(
        "--val-datasets",
        help="Comma-separated datasets whose test portion is used for validation",
    )
    train_parser.add_argument(
        "--epochs",
        type=int,
        help="Override total_epochs",
    )
    train_parser.add_argument(
        "--device",
        help="Override the training device",
    )
    train_parser.set_defaults(func=cmd_train)

    # infer command
    infer_parser = subparsers.add_parser(
        "infer",
        help="Write saliency maps for a dataset split",
    )
    infer_parser.add_argument(
        "--checkpoint",
        required=True,
        help="Checkpoint file",
    )
    infer_parser.add_argument(
        "--data-root",
        required=True,
        help="Directory holding one folder per dataset",
    )
    infer_parser.add_argument(
        "--datasets",
        help="Comma-separated dataset folder names (defaults to every dataset under --data-root)",
    )
    infer_parser.add_argument(
        "-o", "--out",
        required=True,
        help="Output directory; maps go to <out>/<dataset>/<stem>.png",
    )
    infer_parser.add_argument(
        "--split",
        choices=("train", "test", "all"),
        default="test",
        help="Which samples to predict",
    )
    infer_parser.add_argument(
        "--size",
        type=int,
        help="Network input size (defaults to the checkpoint's target_size)",
    )
    infer_parser.add_argument(
        "--device",
        default="cpu",
        help="Inference device",
    )
    infer_parser.set_defaults(func=cmd_infer)

    # eval command
    eval_parser = subparsers.add_parser(
        "eval",
        help="Evaluate saliency maps",
    )
    eval_parser.add_argument(
        "--pred",
        action="append",
        required=True,
        help="Folder of predicted maps (repeat for several datasets)",
    )
    eval_parser.add_argument(
        "--gt",
        action="append",
        required=True,
        help="Folder of ground-truth masks (one per --pred)",
    )
    eval_parser.add_argument(
        "--name",
        action="append",
        help="Dataset name (one per --pred)",
    )
    eval_parser.add_argument(
        "-o", "--out",
        required=True,
        help="Report JSON path",
    )
    eval_parser.add_argument(
        "--csv",
        help="Optional per-image CSV path",
    )
    eval_parser.add_argument(
        "--pr-plot",
        help="Optional PR-curve image path",
    )
    eval_parser.set_defaults(func=cmd_eval)

    # ablate command
    ablate_parser = subparsers.add_parser(
        "ablate",
        help="Compare parameter counts of the named variants",
    )
    ablate_parser.add_argument(
        "--scale",
        choices=[s.value for s in BackboneScale],
        default=BackboneScale.TOY.value,
        help="Backbone width",
    )
    ablate_parser.add_argument(
        "--size",
        type=int,
        default=64,
        help="Input resolution for the test forward pass",
    )
    ablate_parser.set_defaults(func=cmd_ablate)

    # benchmark command
    benchmark_parser = subparsers.add_parser(
        "benchmark",
        help="Measure inference speed",
    )
    benchmark_parser.add_argument(
        "--checkpoint",
        help="Checkpoint file (an untrained network is used otherwise)",
    )
    benchmark_parser.add_argument(
        "--scale",
        choices=[s.value for s in BackboneScale],
        default=BackboneScale.FULL.value,
        help="Backbone width when no checkpoint is given",
    )
    benchmark_parser.add_argument(
        "--size",
        type=int,
        default=DEFAULT_TARGET_SIZE,
        help="Input resolution",
    )
    benchmark_parser.add_argument(
        "--iterations",
        type=int,
        default=10,
        help="Timed forward passes",
    )
    benchmark_parser.add_argument(
        "--device",
        default="cpu",
        help="Benchmark device",
    )
    benchmark_parser.set_defaults(func=cmd_benchmark)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    parser = create_parser()
    args = parser.parse_args(argv)

    if args.command is None:
        parser.print_help()
        return 1

    result: int = args.func(args)
    return result


if __name__ == "__main__":
    sys.exit(main())
