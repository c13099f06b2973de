"""Command line front end.

Stage verbs (extract, gram, project, train-da, train-dl) read and write
binary cache files so long pipelines can be resumed; evaluate runs the
whole experiment from a JSON config, with any flag overriding the file
and --seed overriding every stage seed at once.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from spdps import cache
from spdps.discriminant import build_class_graphs, solve_gda
from spdps.dictionary import ksvd_train
from spdps.harness import (
    CONFIG_VARIANTS,
    ExperimentConfig,
    emit_results,
    load_image_dataset,
    run_experiment,
    synthetic_spd_dataset,
)
from spdps.features import DESCRIPTOR_DIMS, image_to_points
from spdps.kernel_space import gram
from spdps.projection import build_graph, dps_projection, rose_map, training_embeddings
from spdps.sparse_solver import global_sparse_codes, local_sparse_codes

__all__ = ["main"]

_INT_FLAGS = (
    "synthetic_classes",
    "synthetic_per_class",
    "synthetic_dim",
    "rose_k",
    "rose_t",
    "nu_w",
    "nu_b",
    "da_r",
    "dl_m",
    "dl_T0",
    "dl_iterations",
    "knn_k",
    "svm_epochs",
    "repetitions",
    "seed",
)
_FLOAT_FLAGS = (
    "synthetic_spread",
    "synthetic_noise",
    "code_penalty",
    "graph_threshold",
    "alpha",
    "beta",
    "beta_lagrange",
    "svm_penalty",
    "train_fraction",
)
_STR_FLAGS = ("dataset_root", "descriptor", "classifier", "split", "output")
_BOOL_FLAGS = ("use_da", "use_dl")


def _sigma_value(text: str):
    return text if text == "auto" else float(text)


def _variants_value(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for name in _INT_FLAGS:
        parser.add_argument(f"--{name.replace('_', '-').lower()}", dest=name, type=int)
    for name in _FLOAT_FLAGS:
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float)
    for name in _STR_FLAGS:
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name)
    for name in _BOOL_FLAGS:
        parser.add_argument(
            f"--{name.replace('_', '-')}", dest=name, action=argparse.BooleanOptionalAction
        )
    parser.add_argument("--sigma", type=_sigma_value)
    parser.add_argument("--variants", type=_variants_value, metavar="V1,V2,...")
    parser.add_argument("--tiling", nargs=2, type=int, metavar=("ROWS", "COLS"))


def _merged_config(args: argparse.Namespace) -> ExperimentConfig:
    base = ExperimentConfig()
    if args.config is not None:
        base = ExperimentConfig.from_json_dict(json.loads(Path(args.config).read_text()))
    overrides = {
        field.name: getattr(args, field.name)
        for field in dataclasses.fields(ExperimentConfig)
        if getattr(args, field.name, None) is not None
    }
    return dataclasses.replace(base, **overrides) if overrides else base


def _require_labels(labels, path) -> np.ndarray:
    if labels is None:
        raise ValueError(f"descriptors file {path} has no labels")
    return labels


def _loaded_projection(args):
    fitted = cache.load_gram(args.gram)
    model = cache.load_projection(args.projection).with_gram(fitted)
    points, labels = cache.load_descriptors(args.points)
    labels = _require_labels(labels, args.points)
    if len(points) != fitted.n:
        raise ValueError(
            f"descriptors file holds {len(points)} points but the gram was fit on {fitted.n}"
        )
    return fitted, model, labels


def _cmd_synth(args) -> int:
    points, labels = synthetic_spd_dataset(
        args.classes, args.per_class, args.dim, args.spread, args.noise, args.seed
    )
    cache.save_descriptors(args.out, points, labels)
    print(f"wrote {len(points)} descriptors (dim {args.dim}, {args.classes} classes) to {args.out}")
    return 0


def _cmd_extract(args) -> int:
    images, image_labels, class_names = load_image_dataset(args.dataset)
    tiling = tuple(args.tiling) if args.tiling else None
    points, labels = [], []
    for image, label in zip(images, image_labels):
        tiles = image_to_points(image, args.descriptor, tiling)
        points.extend(tiles)
        labels.extend([label] * len(tiles))
    cache.save_descriptors(args.out, points, np.asarray(labels, dtype=np.int64))
    print(
        f"wrote {len(points)} {args.descriptor} descriptors"
        f" ({len(class_names)} classes) to {args.out}"
    )
    return 0


def _cmd_gram(args) -> int:
    points, _ = cache.load_descriptors(args.points)
    fitted = gram(points, sigma=_sigma_value(args.sigma) if args.sigma != "auto" else 0.5)
    cache.save_gram(args.out, fitted)
    print(f"wrote {fitted.n} x {fitted.n} gram (sigma={fitted.sigma}) to {args.out}")
    return 0


def _cmd_project(args) -> int:
    fitted = cache.load_gram(args.gram)
    if args.variant == "rose":
        model = rose_map(fitted, t=args.rose_t, k=args.rose_k, seed=args.seed)
    else:
        graph_l = graph_g = None
        if args.variant in ("l-dps", "h-dps"):
            graph_l = build_graph(
                local_sparse_codes(fitted, lam=args.code_penalty), tau=args.graph_threshold
            )
        if args.variant in ("g-dps", "h-dps"):
            graph_g = build_graph(
                global_sparse_codes(fitted, lam=args.code_penalty), tau=args.graph_threshold
            )
        model = dps_projection(fitted, graph_l=graph_l, graph_g=graph_g, alpha=args.alpha, beta=args.beta)
    cache.save_projection(args.out, model)
    print(f"wrote {model.variant} projection ({fitted.n} x {model.k}) to {args.out}")
    return 0


def _cmd_train_da(args) -> int:
    _, model, labels = _loaded_projection(args)
    embeddings = training_embeddings(model, labels=labels)
    graphs = build_class_graphs(embeddings, nu_w=args.nu_w, nu_b=args.nu_b)
    matrix = np.column_stack([e.vector for e in embeddings])
    da_model = solve_gda(matrix, graphs, beta_lagrange=args.beta_lagrange, r=args.r)
    cache.save_discriminant(args.out, da_model)
    print(f"wrote discriminant ({da_model.coefficients.shape[0]} x {da_model.r}) to {args.out}")
    return 0


def _cmd_train_dl(args) -> int:
    _, model, labels = _loaded_projection(args)
    vectors = np.vstack([e.vector for e in training_embeddings(model)])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    class_count = int(labels.max()) + 1
    for cls in range(class_count):
        signals = [vectors[i] for i in np.flatnonzero(labels == cls)]
        if not signals:
            raise ValueError(f"class {cls} has no training points")
        m = min(args.m, len(signals))
        learned = ksvd_train(
            signals,
            m=m,
            T0=min(args.t0, m),
            iterations=args.iterations,
            seed=args.seed,
            lam=args.lam,
        )
        cache.save_dictionary(out_dir / f"class_{cls}.dict", learned)
    print(f"wrote {class_count} class dictionaries to {out_dir}")
    return 0


def _cmd_evaluate(args) -> int:
    config = _merged_config(args)
    report = run_experiment(config)
    out_dir = args.out if args.out is not None else (config.output or ".")
    json_path, _ = emit_results(report, out_dir)
    for variant in config.variants:
        stats = report.summary[variant]
        if stats["count"]:
            print(f"{variant}: {stats['mean']:.2f} +- {stats['std']:.2f} ({stats['count']} runs)")
        else:
            print(f"{variant}: no successful runs")
    print(f"report written to {json_path.parent}")
    if report.partial:
        errors = {run.error for run in report.runs if run.error is not None}
        for message in sorted(errors):
            print(f"warning: {message}", file=sys.stderr)
        return 1
    return 0


def _cmd_report(args) -> int:
    path = Path(args.path)
    if path.is_dir():
        path = path / "report.json"
    data = json.loads(path.read_text())
    for variant, stats in data["summary"].items():
        if stats["count"]:
            print(f"{variant}: {stats['mean']:.2f} +- {stats['std']:.2f} ({stats['count']} runs)")
        else:
            print(f"{variant}: no successful runs")
    if data["partial"]:
        print("warning: report is partial; some repetitions failed", file=sys.stderr)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdps",
        description="Kernel projection pipelines for covariance descriptors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="sample a labeled synthetic SPD dataset")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=30)
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("extract", help="extract covariance descriptors from images")
    p.add_argument("--dataset", required=True, help="root with one subdirectory per class")
    p.add_argument("--descriptor", default="texture5", choices=sorted(DESCRIPTOR_DIMS))
    p.add_argument("--tiling", nargs=2, type=int, metavar=("ROWS", "COLS"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("gram", help="fit a Stein kernel Gram on cached descriptors")
    p.add_argument("--points", required=True)
    p.add_argument("--sigma", default="auto")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gram)

    p = sub.add_parser("project", help="learn a projection from a cached Gram")
    p.add_argument("--gram", required=True)
    p.add_argument("--variant", required=True, choices=CONFIG_VARIANTS)
    p.add_argument("--rose-k", type=int, default=128)
    p.add_argument("--rose-t", type=int)
    p.add_argument("--code-penalty", type=float)
    p.add_argument("--graph-threshold", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("train-da", help="fit discriminant directions on training embeddings")
    p.add_argument("--gram", required=True)
    p.add_argument("--projection", required=True)
    p.add_argument("--points", required=True, help="labeled descriptors the gram was fit on")
    p.add_argument("--nu-w", type=int)
    p.add_argument("--nu-b", type=int, default=5)
    p.add_argument("--beta-lagrange", type=float, default=0.5)
    p.add_argument("--r", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_da)

    p = sub.add_parser("train-dl", help="learn one dictionary per class")
    p.add_argument("--gram", required=True)
    p.add_argument("--projection", required=True)
    p.add_argument("--points", required=True, help="labeled descriptors the gram was fit on")
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--t0", type=int, default=3)
    p.add_argument("--iterations", type=int, default=30)
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="directory for class_<c>.dict files")
    p.set_defaults(func=_cmd_train_dl)

    p = sub.add_parser("evaluate", help="run a full experiment and write reports")
    p.add_argument("--config", help="JSON experiment config; flags override its fields")
    p.add_argument("--out", help="report directory (overrides config output)")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="print the summary of a written report")
    p.add_argument("path", help="report.json or the directory holding it")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
