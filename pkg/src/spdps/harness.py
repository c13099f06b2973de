"""Experiment orchestration: datasets, pipeline runs, and result reports.

An experiment is one JSON-serializable config driving the whole chain:
descriptors (from an image directory or a synthetic SPD sampler), Stein
Gram, one or more projection variants, optional discriminant analysis,
optional dictionary learning, and a final classifier.  Each repetition
re-splits (and for synthetic data re-draws) with seed ``seed + rep``, so
reports are reproducible end to end; wall-clock timings are kept out of
report.json for that reason and live only in the CSV.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from spdps.classify import LabeledSet, knn_classify, linear_svm_predict, linear_svm_train
from spdps.dictionary import classify_by_residual, ksvd_train
from spdps.discriminant import build_class_graphs, solve_gda, transform
from spdps.features import DESCRIPTOR_DIMS, image_to_points, load_image
from spdps.kernel_space import gram, worker_count
from spdps.projection import build_graph, dps_projection, embed_batch, rose_map, training_embeddings
from spdps.sparse_solver import global_sparse_codes, local_sparse_codes
from spdps.spd_core import SpdMatrix, spd_expm

__all__ = [
    "ExperimentConfig",
    "RunResult",
    "ResultsReport",
    "synthetic_spd_dataset",
    "load_image_dataset",
    "run_experiment",
    "emit_results",
]

CONFIG_VARIANTS = ("rose", "l-dps", "g-dps", "h-dps")
_INTERNAL_VARIANT = {"rose": "rose", "l-dps": "local", "g-dps": "global", "h-dps": "hybrid"}
SUPPORTED_IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")
STAGES = ("features", "gram", "codes", "project", "da", "dl", "classify")


def synthetic_spd_dataset(
    classes: int,
    per_class: int,
    d: int,
    spread: float,
    noise: float,
    seed: int,
) -> tuple[list[SpdMatrix], np.ndarray]:
    """Seeded clusters of SPD matrices around random log-space means.

    Class c picks a symmetric mean ``M_c = spread * S_c`` with ``S_c``
    standard normal symmetric; each sample is ``expm(M_c + noise * R)`` for
    fresh symmetric noise ``R``.  Returns the points in class order together
    with their integer labels.  Identical arguments reproduce the dataset
    exactly.
    """
    if min(classes, per_class, d) < 1:
        raise ValueError("classes, per_class, and d must all be positive")
    if spread < 0.0 or noise < 0.0:
        raise ValueError("spread and noise must be nonnegative")
    rng = np.random.default_rng(seed)
    points: list[SpdMatrix] = []
    labels = np.repeat(np.arange(classes), per_class)
    for _ in range(classes):
        s = rng.standard_normal((d, d))
        mean_log = spread * (s + s.T) / 2.0
        for _ in range(per_class):
            r = rng.standard_normal((d, d))
            points.append(spd_expm(mean_log + noise * (r + r.T) / 2.0))
    return points, labels


def load_image_dataset(root) -> tuple[list[np.ndarray], np.ndarray, tuple[str, ...]]:
    """Read one subdirectory per class, lexicographic in names and files.

    Returns (images, labels, class_names); labels index into the sorted
    class directory order.
    """
    root = Path(root)
    if not root.is_dir():
        raise ValueError(f"dataset root {root} is not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise ValueError(f"dataset root {root} contains no class directories")
    images, labels = [], []
    for cid, class_dir in enumerate(class_dirs):
        files = sorted(
            p for p in class_dir.iterdir() if p.suffix.lower() in SUPPORTED_IMAGE_SUFFIXES
        )
        if not files:
            raise ValueError(f"class directory {class_dir} has no supported images")
        for path in files:
            images.append(load_image(path))
            labels.append(cid)
    return images, np.asarray(labels, dtype=np.int64), tuple(d.name for d in class_dirs)


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs, flat and JSON-round-trippable.

    ``dataset_root`` selects image input; otherwise the synthetic sampler
    is used.  ``sigma`` is a kernel parameter or the string "auto" (the
    smallest admissible value, 1/2).  ``split`` "auto" resolves to the
    even/odd tile protocol for texture image data and to seeded random
    stratified splits otherwise.
    """

    dataset_root: str | None = None
    descriptor: str = "texture5"
    tiling: tuple[int, int] | None = None
    synthetic_classes: int = 3
    synthetic_per_class: int = 30
    synthetic_dim: int = 5
    synthetic_spread: float = 1.0
    synthetic_noise: float = 0.2
    sigma: float | str = 0.5
    variants: tuple[str, ...] = ("h-dps",)
    code_penalty: float | None = None
    graph_threshold: float | None = None
    alpha: float | None = None
    beta: float | None = None
    rose_k: int = 128
    rose_t: int | None = None
    use_da: bool = False
    nu_w: int | None = None
    nu_b: int = 5
    beta_lagrange: float = 0.5
    da_r: int | None = None
    use_dl: bool = False
    dl_m: int = 8
    dl_T0: int = 3
    dl_iterations: int = 30
    classifier: str = "svm"
    knn_k: int = 3
    svm_penalty: float = 1.0
    svm_epochs: int = 50
    split: str = "auto"
    train_fraction: float = 2.0 / 3.0
    repetitions: int = 5
    seed: int = 0
    output: str | None = None

    def __post_init__(self) -> None:
        if self.descriptor not in DESCRIPTOR_DIMS:
            raise ValueError(f"unknown descriptor {self.descriptor!r}")
        variants = tuple(self.variants)
        if not variants or len(set(variants)) != len(variants):
            raise ValueError("variants must be a non-empty list without duplicates")
        for variant in variants:
            if variant not in CONFIG_VARIANTS:
                raise ValueError(f"unknown variant {variant!r}, pick from {CONFIG_VARIANTS}")
        object.__setattr__(self, "variants", variants)
        if self.tiling is not None:
            tiling = tuple(int(v) for v in self.tiling)
            if len(tiling) != 2 or min(tiling) < 1:
                raise ValueError("tiling must be two positive integers")
            object.__setattr__(self, "tiling", tiling)
        if isinstance(self.sigma, str):
            if self.sigma != "auto":
                raise ValueError("sigma must be a positive number or 'auto'")
        elif float(self.sigma) <= 0.0:
            raise ValueError("sigma must be positive")
        if self.classifier not in ("svm", "knn"):
            raise ValueError("classifier must be 'svm' or 'knn'")
        if self.split not in ("auto", "random", "even-odd"):
            raise ValueError("split must be 'auto', 'random', or 'even-odd'")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")
        if min(self.synthetic_classes, self.synthetic_per_class, self.synthetic_dim) < 1:
            raise ValueError("synthetic shape parameters must be positive")
        if self.synthetic_spread < 0.0 or self.synthetic_noise < 0.0:
            raise ValueError("spread and noise must be nonnegative")
        for name in ("code_penalty", "graph_threshold"):
            value = getattr(self, name)
            if value is not None and value < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        if self.rose_k < 1 or (self.rose_t is not None and self.rose_t < 1):
            raise ValueError("rose parameters must be positive")
        if min(self.dl_m, self.dl_T0, self.knn_k, self.svm_epochs, self.nu_b) < 1:
            raise ValueError("dl_m, dl_T0, knn_k, svm_epochs, and nu_b must be positive")
        if self.dl_iterations < 0:
            raise ValueError("dl_iterations must be nonnegative")
        if self.svm_penalty <= 0.0:
            raise ValueError("svm_penalty must be positive")
        if self.nu_w is not None and self.nu_w < 1:
            raise ValueError("nu_w must be positive")
        if self.da_r is not None and self.da_r < 1:
            raise ValueError("da_r must be positive")

    def to_json_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["variants"] = list(self.variants)
        if self.tiling is not None:
            out["tiling"] = list(self.tiling)
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        kwargs = dict(data)
        if "variants" in kwargs:
            kwargs["variants"] = tuple(kwargs["variants"])
        if kwargs.get("tiling") is not None:
            kwargs["tiling"] = tuple(kwargs["tiling"])
        return cls(**kwargs)


@dataclasses.dataclass(frozen=True)
class RunResult:
    """One (variant, repetition) outcome; error runs carry no accuracy."""

    variant: str
    rep: int
    accuracy: float | None
    confusion: tuple | None
    timings: dict
    error: str | None = None

    def __post_init__(self) -> None:
        if self.variant not in CONFIG_VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if (self.accuracy is None) != (self.error is not None):
            raise ValueError("exactly one of accuracy or error must be set")
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 100.0:
            raise ValueError("accuracy must lie in [0, 100]")


def _summarize(runs) -> dict:
    summary: dict = {}
    for run in runs:
        summary.setdefault(run.variant, []).append(run)
    out = {}
    for variant, rows in summary.items():
        accs = [r.accuracy for r in rows if r.error is None]
        out[variant] = {
            "count": len(accs),
            "mean": float(np.mean(accs)) if accs else None,
            "std": float(np.std(accs)) if accs else None,
        }
    return out


@dataclasses.dataclass(frozen=True)
class ResultsReport:
    """All runs of one experiment plus per-variant mean and std."""

    config: ExperimentConfig
    runs: tuple[RunResult, ...]
    summary: dict
    partial: bool

    def __post_init__(self) -> None:
        object.__setattr__(self, "runs", tuple(self.runs))
        recomputed = _summarize(self.runs)
        if set(recomputed) != set(self.summary):
            raise ValueError("summary variants do not match runs")
        for variant, stats in recomputed.items():
            stored = self.summary[variant]
            if stored["count"] != stats["count"]:
                raise ValueError("summary count inconsistent with runs")
            for key in ("mean", "std"):
                a, b = stored[key], stats[key]
                if (a is None) != (b is None) or (a is not None and abs(a - b) > 1e-12):
                    raise ValueError(f"summary {key} inconsistent with runs")
        if self.partial != any(r.error is not None for r in self.runs):
            raise ValueError("partial flag inconsistent with runs")

    @classmethod
    def from_runs(cls, config: ExperimentConfig, runs) -> "ResultsReport":
        runs = tuple(runs)
        return cls(
            config=config,
            runs=runs,
            summary=_summarize(runs),
            partial=any(r.error is not None for r in runs),
        )

    def to_json_dict(self) -> dict:
        return {
            "config": self.config.to_json_dict(),
            "partial": self.partial,
            "runs": [
                {
                    "variant": r.variant,
                    "rep": r.rep,
                    "accuracy": r.accuracy,
                    "confusion": r.confusion,
                    "error": r.error,
                }
                for r in self.runs
            ],
            "summary": self.summary,
        }


def _resolve_sigma(config: ExperimentConfig) -> float:
    return 0.5 if config.sigma == "auto" else float(config.sigma)


def _resolve_split(config: ExperimentConfig) -> str:
    if config.split != "auto":
        return config.split
    if config.dataset_root is not None and config.descriptor == "texture5":
        return "even-odd"
    return "random"


def _split_indices(labels, policy: str, train_fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    train, test = [], []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if members.size < 2:
            raise ValueError(f"class {cls} needs at least 2 points to split")
        if policy == "even-odd":
            train.extend(members[0::2])
            test.extend(members[1::2])
        else:
            picked = rng.permutation(members)
            count = int(train_fraction * members.size)
            count = min(max(count, 1), members.size - 1)
            train.extend(picked[:count])
            test.extend(picked[count:])
    train_idx = np.asarray(sorted(train), dtype=np.int64)
    test_idx = np.asarray(sorted(test), dtype=np.int64)
    if np.intersect1d(train_idx, test_idx).size:
        raise RuntimeError("split hygiene violated: train and test overlap")
    return train_idx, test_idx


def _extract_image_points(config: ExperimentConfig):
    images, image_labels, _ = load_image_dataset(config.dataset_root)
    points, labels = [], []
    for image, label in zip(images, image_labels):
        tiles = image_to_points(image, config.descriptor, config.tiling)
        points.extend(tiles)
        labels.extend([label] * len(tiles))
    return points, np.asarray(labels, dtype=np.int64)


class _StageClock:
    def __init__(self) -> None:
        self.timings: dict = {}

    def add(self, stage: str, start: float) -> None:
        self.timings[stage] = self.timings.get(stage, 0.0) + (time.perf_counter() - start)


def _classify_stage(config, rep_seed, train_matrix, train_labels, test_matrix, class_count):
    if config.use_dl:
        dictionaries = []
        for cls in range(class_count):
            signals = [v for v, l in zip(train_matrix, train_labels) if l == cls]
            if not signals:
                raise ValueError(f"class {cls} has no training points for dictionary learning")
            m = min(config.dl_m, len(signals))
            t0 = min(config.dl_T0, m)
            dictionaries.append(
                ksvd_train(signals, m=m, T0=t0, iterations=config.dl_iterations, seed=rep_seed)
            )
        return [classify_by_residual(vec, dictionaries) for vec in test_matrix]
    labeled = LabeledSet(vectors=train_matrix, labels=train_labels, class_count=class_count)
    if config.classifier == "knn":
        k = min(config.knn_k, labeled.n)
        return [knn_classify(vec, labeled, k) for vec in test_matrix]
    model = linear_svm_train(
        labeled, penalty=config.svm_penalty, epochs=config.svm_epochs, seed=rep_seed
    )
    return [linear_svm_predict(vec, model) for vec in test_matrix]


def _run_repetition(config: ExperimentConfig, rep: int, fixed_data) -> list[RunResult]:
    rep_seed = config.seed + rep
    clock = _StageClock()
    start = time.perf_counter()
    if fixed_data is None:
        points, labels = synthetic_spd_dataset(
            config.synthetic_classes,
            config.synthetic_per_class,
            config.synthetic_dim,
            config.synthetic_spread,
            config.synthetic_noise,
            seed=rep_seed,
        )
    else:
        points, labels = fixed_data
    clock.add("features", start)

    train_idx, test_idx = _split_indices(
        labels, _resolve_split(config), config.train_fraction, np.random.default_rng(rep_seed)
    )
    train_points = [points[i] for i in train_idx]
    test_points = [points[i] for i in test_idx]
    train_labels = labels[train_idx]
    test_labels = labels[test_idx]
    class_count = int(labels.max()) + 1

    start = time.perf_counter()
    fitted = gram(train_points, sigma=_resolve_sigma(config))
    clock.add("gram", start)

    internal = [_INTERNAL_VARIANT[v] for v in config.variants]
    graph_l = graph_g = None
    start = time.perf_counter()
    if {"local", "hybrid"} & set(internal):
        graph_l = build_graph(
            local_sparse_codes(fitted, lam=config.code_penalty), tau=config.graph_threshold
        )
    if {"global", "hybrid"} & set(internal):
        graph_g = build_graph(
            global_sparse_codes(fitted, lam=config.code_penalty), tau=config.graph_threshold
        )
    clock.add("codes", start)

    results = []
    for variant in config.variants:
        timings = dict(clock.timings)
        start = time.perf_counter()
        kind = _INTERNAL_VARIANT[variant]
        if kind == "rose":
            model = rose_map(fitted, t=config.rose_t, k=config.rose_k, seed=rep_seed)
        else:
            model = dps_projection(
                fitted,
                graph_l=graph_l if kind in ("local", "hybrid") else None,
                graph_g=graph_g if kind in ("global", "hybrid") else None,
                alpha=config.alpha,
                beta=config.beta,
            )
        train_matrix = np.vstack([e.vector for e in training_embeddings(model)])
        test_matrix = np.vstack([e.vector for e in embed_batch(test_points, model)])
        timings["project"] = time.perf_counter() - start

        if config.use_da:
            start = time.perf_counter()
            embeddings = training_embeddings(model, labels=train_labels)
            graphs = build_class_graphs(embeddings, nu_w=config.nu_w, nu_b=config.nu_b)
            da_model = solve_gda(
                train_matrix.T, graphs, beta_lagrange=config.beta_lagrange, r=config.da_r
            )
            train_matrix = np.vstack([transform(v, da_model) for v in train_matrix])
            test_matrix = np.vstack([transform(v, da_model) for v in test_matrix])
            timings["da"] = time.perf_counter() - start

        start = time.perf_counter()
        predictions = _classify_stage(
            config, rep_seed, train_matrix, train_labels, test_matrix, class_count
        )
        timings["dl" if config.use_dl else "classify"] = time.perf_counter() - start

        confusion = np.zeros((class_count, class_count), dtype=np.int64)
        for truth, pred in zip(test_labels, predictions):
            confusion[truth, pred] += 1
        accuracy = 100.0 * float(np.trace(confusion)) / float(len(test_labels))
        results.append(
            RunResult(
                variant=variant,
                rep=rep,
                accuracy=accuracy,
                confusion=tuple(tuple(int(v) for v in row) for row in confusion),
                timings=timings,
            )
        )
    return results


def run_experiment(config: ExperimentConfig) -> ResultsReport:
    """Run every repetition and variant in the config; never raises per-rep.

    A failure inside a repetition aborts that repetition only: its rows
    carry the error message and the report is marked partial.
    """
    fixed_data = None
    if config.dataset_root is not None:
        fixed_data = _extract_image_points(config)

    def one(rep: int) -> list[RunResult]:
        try:
            return _run_repetition(config, rep, fixed_data)
        except Exception as exc:
            message = f"{type(exc).__name__}: {exc}"
            return [
                RunResult(
                    variant=variant,
                    rep=rep,
                    accuracy=None,
                    confusion=None,
                    timings={},
                    error=message,
                )
                for variant in config.variants
            ]

    workers = min(worker_count(), config.repetitions)
    if workers > 1 and config.repetitions > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(one, range(config.repetitions)))
    else:
        chunks = [one(rep) for rep in range(config.repetitions)]
    return ResultsReport.from_runs(config, [run for chunk in chunks for run in chunk])


def emit_results(report: ResultsReport, out_dir) -> tuple[Path, Path]:
    """Write report.json (deterministic) and report.csv (with timings)."""
    out_dir = Path(out_dir)
    json_path = out_dir / "report.json"
    csv_path = out_dir / "report.csv"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        json_path.write_text(
            json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
        )
        with open(csv_path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["variant", "rep", "accuracy", "status", *STAGES])
            for run in report.runs:
                writer.writerow(
                    [
                        run.variant,
                        run.rep,
                        "" if run.accuracy is None else f"{run.accuracy:.6f}",
                        "ok" if run.error is None else run.error,
                        *(
                            f"{run.timings[stage]:.6f}" if stage in run.timings else ""
                            for stage in STAGES
                        ),
                    ]
                )
    except OSError as exc:
        raise OSError(f"cannot write results under {out_dir}: {exc}") from exc
    return json_path, csv_path
