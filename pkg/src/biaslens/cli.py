"""Command-line surface: subcommand dispatch, reports, plots, exit codes.

Exit codes: 0 success, 1 usage error, 2 data error (message names the
offending path), 3 internal error.  Output is JSON on stdout by default;
``--out`` writes files and ``--csv`` switches tabular outputs to CSV.
Randomized subcommands default their ``--seed`` and always echo the seeds
used, so any run can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import traceback
from pathlib import Path

import numba
import numpy as np

from biaslens import __version__
from biaslens.corpus import (
    CorpusError,
    EmbeddingSet,
    load_manifest,
    read_embeddings,
)
from biaslens.imglab import (
    FakeSpec,
    TEXTURE_KINDS,
    gen_fake,
    read_png,
    residual_image,
    residual_preview,
    write_png,
    write_residual,
)
from biaslens.metrics import granularity_sweep
from biaslens.pipeline import (
    ArtifactLabConfig,
    ExperimentConfig,
    artifact_channel_experiment,
    assess_semantic_bias,
    config_hash,
    filter_correctly_clustered,
    robustness_matrix,
    save_report,
)
from biaslens.probe import (
    ProbeConfig,
    PromptBank,
    characterize,
    eval_probe,
    save_probe,
    split_stratified,
    train_linear_probe,
    two_corpus_probe_vs_cluster,
)
from biaslens.reduce import ReductionConfig, reduce as reduce_features
from biaslens.resolution import (
    default_grid,
    kde_eval,
    overlap_coefficient,
    profiles_from_manifest,
)
from biaslens.svgplot import PlotSpec, Series, emit_svg

_BACKENDS = ("umap", "pca", "none")
_ALGORITHMS = ("kmeans", "ward")


class UsageError(Exception):
    """Bad flags or flag values; mapped to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102 - argparse hook
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}"
        ) from None


def _str_list(valid: tuple[str, ...]):
    def parse(text: str) -> list[str]:
        items = [part for part in text.split(",") if part != ""]
        for item in items:
            if item not in valid:
                raise argparse.ArgumentTypeError(
                    f"{item!r} not in {valid}"
                )
        return items

    return parse


def _k_value(text: str) -> int | str:
    if text == "auto":
        return "auto"
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected integer or 'auto', got {text!r}"
        ) from None
    if value < 1:
        raise argparse.ArgumentTypeError("k must be >= 1")
    return value


def _k_range(text: str) -> list[int]:
    if ":" in text:
        lo_s, hi_s = text.split(":", 1)
        try:
            lo, hi = int(lo_s), int(hi_s)
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"expected lo:hi or comma list, got {text!r}"
            ) from None
        if lo < 1 or hi < lo:
            raise argparse.ArgumentTypeError(f"bad k range {text!r}")
        return list(range(lo, hi + 1))
    return _int_list(text)


def _emit(payload: dict, args) -> None:
    """Write a report to --out (if given) and echo JSON to stdout."""
    out = getattr(args, "out", None)
    if out:
        save_report(payload, out)
        echo = {"out": str(out)}
        for key in ("seed", "seeds"):
            if key in payload:
                echo[key] = payload[key]
        print(json.dumps(echo, sort_keys=True))
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))


def _emit_csv(rows: list[dict], fieldnames: list[str], args) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    out = getattr(args, "out", None)
    if out:
        Path(out).write_text(buf.getvalue(), encoding="utf-8")
        print(json.dumps({"out": str(out)}, sort_keys=True))
    else:
        sys.stdout.write(buf.getvalue())


def _reduction_from_args(args, seed: int | None = None) -> ReductionConfig:
    return ReductionConfig(
        backend=args.backend,
        out_dim=args.dims,
        seed=args.seed[0] if seed is None else seed,
    )


def _experiment_config(args) -> ExperimentConfig:
    return ExperimentConfig(
        reduction=_reduction_from_args(args),
        k=args.k,
        restarts=args.restarts,
        seeds=tuple(args.seed),
        algorithm=args.algorithm,
    )


def _load_set(path) -> EmbeddingSet:
    return read_embeddings(path)


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_stats(args) -> int:
    manifest = load_manifest(args.manifest)
    profiles = profiles_from_manifest(manifest, bandwidth=args.bandwidth)
    ordered = [profiles[name] for name in manifest.datasets]
    grid = default_grid(ordered, points=args.grid_points)
    overlaps = []
    for i, p in enumerate(ordered):
        for q in ordered[i + 1:]:
            overlaps.append({
                "a": p.dataset,
                "b": q.dataset,
                "overlap": overlap_coefficient(p, q, grid),
            })
    report = {
        "experiment": "resolution-stats",
        "manifest": str(args.manifest),
        "datasets": [
            {
                "dataset": p.dataset,
                "n": p.n,
                "bandwidth": p.bandwidth,
                "proxy_mean": float(np.mean(p.samples)),
                "proxy_min": float(np.min(p.samples)),
                "proxy_max": float(np.max(p.samples)),
            }
            for p in ordered
        ],
        "overlaps": overlaps,
    }
    if args.csv:
        rows = []
        for p in ordered:
            density = kde_eval(p, grid)
            for x, dens in zip(grid, density):
                rows.append({"dataset": p.dataset, "x": f"{x:.6g}",
                             "density": f"{dens:.8g}"})
        _emit_csv(rows, ["dataset", "x", "density"], args)
        return 0
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        series = [
            Series(name=p.dataset, x=grid, y=kde_eval(p, grid))
            for p in ordered
        ]
        emit_svg(
            PlotSpec(kind="kde-lines", series=series,
                     title="Resolution-proxy KDE per dataset",
                     xlabel="resolution proxy (px)", ylabel="density"),
            out_dir / "kde.svg",
        )
        for p in ordered:
            density = kde_eval(p, grid)
            with open(out_dir / f"kde_{p.dataset}.csv", "w",
                      encoding="utf-8", newline="\n") as fh:
                fh.write("x,density\n")
                for x, dens in zip(grid, density):
                    fh.write(f"{x:.6g},{dens:.8g}\n")
        save_report(report, out_dir / "stats.json")
        print(json.dumps({"out": str(out_dir)}, sort_keys=True))
        return 0
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_fake_gen(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.kind == "mix":
        kinds = [TEXTURE_KINDS[i % len(TEXTURE_KINDS)]
                 for i in range(args.count)]
    else:
        kinds = [args.kind] * args.count
    records = []
    for i, kind in enumerate(kinds):
        spec = FakeSpec(width=args.width, height=args.height,
                        texture_kind=kind, seed=args.seed[0] + i)
        img = gen_fake(spec)
        name = f"fake_{i:04d}.png"
        write_png(img, out_dir / name)
        records.append({"path": name, "kind": kind})
    with open(out_dir / "manifest.csv", "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("path,dataset,width,height\n")
        for rec in records:
            fh.write(f"{rec['path']},fake,{args.width},{args.height}\n")
    print(json.dumps({
        "out": str(out_dir),
        "count": args.count,
        "width": args.width,
        "height": args.height,
        "seed": args.seed[0],
        "kinds": kinds,
    }, indent=2, sort_keys=True))
    return 0


def _cmd_residual(args) -> int:
    try:
        img = read_png(args.in_path)
    except OSError as exc:
        raise CorpusError(f"cannot read image {args.in_path}: {exc}") from None
    res = residual_image(img, args.final)
    report = {
        "experiment": "residual",
        "in": str(args.in_path),
        "pipeline_size": args.final,
        "width": res.width,
        "height": res.height,
        "channels": res.channels,
        "mean_abs": res.mean_abs(),
        "max_abs": float(np.abs(res.values).max()),
    }
    if args.out:
        base = Path(args.out)
        write_residual(res, base.with_suffix(".res"))
        residual_preview(res, base.with_suffix(".png"))
        report["out_raster"] = str(base.with_suffix(".res"))
        report["out_preview"] = str(base.with_suffix(".png"))
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_cluster(args) -> int:
    es = _load_set(args.in_path)
    cfg = _experiment_config(args)
    report = assess_semantic_bias(es, cfg)
    report["seeds"] = list(cfg.seeds)
    _emit(report, args)
    return 0


def _cmd_sweep(args) -> int:
    es = _load_set(args.in_path)
    seed = args.seed[0]
    Z = reduce_features(
        np.asarray(es.vectors, dtype=float),
        _reduction_from_args(args, seed=seed),
    )
    pairs = granularity_sweep(Z, np.asarray(es.labels, dtype=np.int64),
                              args.k_range, restarts=args.restarts,
                              seed=seed)
    if args.csv:
        rows = [{"k": k, "nmi_pct": f"{v:.6f}"} for k, v in pairs]
        _emit_csv(rows, ["k", "nmi_pct"], args)
        return 0
    report = {
        "experiment": "granularity-sweep",
        "backend": args.backend,
        "out_dim": args.dims,
        "restarts": args.restarts,
        "seed": seed,
        "cells": [{"k": k, "nmi_pct": v} for k, v in pairs],
    }
    _emit(report, args)
    return 0


def _cmd_matrix(args) -> int:
    es = _load_set(args.in_path)
    report = robustness_matrix(
        es,
        dims=args.dims,
        backends=args.backend,
        algorithms=args.algorithm,
        seeds=args.seed,
        restarts=args.restarts,
        k=args.k,
    )
    report["seeds"] = list(args.seed)
    if args.csv:
        rows = [
            {
                "backend": cell["settings"]["backend"],
                "algorithm": cell["settings"]["algorithm"],
                "out_dim": cell["settings"]["out_dim"],
                "accuracy_pct": f"{cell['accuracy_pct']:.4f}",
                "nmi_pct": f"{cell['nmi_pct']:.4f}",
                "flagged": cell["flagged"],
            }
            for cell in report["cells"]
        ]
        _emit_csv(rows, ["backend", "algorithm", "out_dim", "accuracy_pct",
                         "nmi_pct", "flagged"], args)
        return 0
    _emit(report, args)
    return 0


def _cmd_probe(args) -> int:
    es = _load_set(args.in_path)
    if len(es.datasets) < 2:
        raise UsageError("probe needs an embedding set with >= 2 datasets")
    X = np.asarray(es.vectors, dtype=float)
    y = np.asarray(es.labels, dtype=np.int64)
    seed = args.seed[0]
    train_idx, test_idx = split_stratified(y, seed=seed)
    cfg = ProbeConfig(seed=seed)
    model = train_linear_probe(X[train_idx], y[train_idx], cfg,
                               classes=list(es.datasets))
    train_acc, _ = eval_probe(model, X[train_idx], y[train_idx])
    test_acc, confusion = eval_probe(model, X[test_idx], y[test_idx])
    report = {
        "experiment": "linear-probe",
        "config_hash": config_hash({
            "seed": seed, "learning_rate": cfg.learning_rate,
            "epochs": cfg.epochs, "l2": cfg.l2,
        }),
        "datasets": list(es.datasets),
        "n_train": int(train_idx.size),
        "n_test": int(test_idx.size),
        "seed": seed,
        "train_accuracy_pct": train_acc * 100.0,
        "test_accuracy_pct": test_acc * 100.0,
        "confusion_counts": confusion.counts.tolist(),
    }
    if args.save_model:
        save_probe(model, args.save_model)
        report["model"] = str(args.save_model)
    _emit(report, args)
    return 0


def _cmd_compare(args) -> int:
    set_a = _load_set(args.in_path)
    set_b = _load_set(args.in2)
    cfg = _experiment_config(args)
    report = two_corpus_probe_vs_cluster(set_a, set_b, cfg,
                                         knn_k=args.knn_k)
    report["config_hash"] = config_hash(cfg)
    _emit(report, args)
    return 0


def _cmd_characterize(args) -> int:
    es = _load_set(args.in_path)
    bank = PromptBank.from_embedding_set(_load_set(args.prompts))
    report: dict = {
        "experiment": "prompt-characterization",
        "prompts": str(args.prompts),
        "categories": bank.category_names,
        "all_images": bool(args.all_images),
    }
    if not args.all_images:
        cfg = _experiment_config(args)
        es, summary = filter_correctly_clustered(es, cfg)
        report["filter"] = summary
        report["seeds"] = list(cfg.seeds)
    result = characterize(es, bank)
    table = [
        {
            "dataset": name,
            **{
                cat: (None if np.isnan(result.percentages[i, j])
                      else float(result.percentages[i, j]))
                for j, cat in enumerate(result.categories)
            },
        }
        for i, name in enumerate(result.datasets)
    ]
    report["table"] = table
    report["excluded"] = result.excluded.tolist()
    if args.csv:
        rows = []
        for entry in table:
            row = {"dataset": entry["dataset"]}
            for cat in result.categories:
                value = entry[cat]
                row[cat] = "" if value is None else f"{value:.2f}"
            rows.append(row)
        _emit_csv(rows, ["dataset"] + result.categories, args)
        return 0
    _emit(report, args)
    return 0


def _cmd_artifact_lab(args) -> int:
    lab = ArtifactLabConfig(
        mid=args.mid,
        restarts=args.restarts,
        umap_dim=args.dims,
    )
    report = artifact_channel_experiment(
        res_a=args.res_a,
        res_b=args.res_b,
        n_per=args.n_per,
        final_side=args.final,
        seed=args.seed[0],
        lab=lab,
    )
    report["seed"] = args.seed[0]
    _emit(report, args)
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def _add_seed(parser: _Parser, default: str = "0") -> None:
    parser.add_argument(
        "--seed", type=_int_list, default=_int_list(default), metavar="S[,S…]",
        help=f"random seed(s), comma-separated (default {default})",
    )


def _add_reduction(parser: _Parser) -> None:
    parser.add_argument("--backend", choices=_BACKENDS, default="umap",
                        help="reduction backend (default umap)")
    parser.add_argument("--dims", type=int, default=20,
                        help="reduction output dimension (default 20)")


def build_parser() -> _Parser:
    parser = _Parser(
        prog="biaslens",
        description="Dataset-bias diagnostics: resolution artifacts and "
                    "semantic separability.",
    )
    parser.add_argument("--version", action="version",
                        version=f"biaslens {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND",
                            parser_class=_Parser)

    p = sub.add_parser("stats",
                       help="resolution-proxy KDE profiles and overlaps")
    p.add_argument("--manifest", required=True, help="corpus manifest CSV")
    p.add_argument("--out", help="output directory for CSV/SVG/JSON")
    p.add_argument("--csv", action="store_true", help="emit CSV density table")
    p.add_argument("--bandwidth", type=float, default=None,
                   help="fixed KDE bandwidth (default: Silverman rule)")
    p.add_argument("--grid-points", type=int, default=2048)
    p.set_defaults(handler=_cmd_stats)

    p = sub.add_parser("fake-gen",
                       help="generate a procedural fake-image corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=12)
    p.add_argument("--width", type=int, default=100)
    p.add_argument("--height", type=int, default=100)
    p.add_argument("--kind", choices=TEXTURE_KINDS + ("mix",), default="mix")
    _add_seed(p)
    p.set_defaults(handler=_cmd_fake_gen)

    p = sub.add_parser("residual",
                       help="round-trip resize residual of one image")
    p.add_argument("--in", dest="in_path", required=True, help="input image")
    p.add_argument("--final", type=int, default=224,
                   help="pipeline size (default 224)")
    p.add_argument("--out", help="output basename for .res and preview .png")
    p.set_defaults(handler=_cmd_residual)

    p = sub.add_parser("cluster",
                       help="unsupervised semantic-bias assessment")
    p.add_argument("--in", dest="in_path", required=True,
                   help="EMB1 embedding file")
    p.add_argument("--k", type=_k_value, default="auto")
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--algorithm", choices=_ALGORITHMS, default="kmeans")
    p.add_argument("--out", help="report JSON path")
    _add_reduction(p)
    _add_seed(p, "0,1,2,3,4")
    p.set_defaults(handler=_cmd_cluster)

    p = sub.add_parser("sweep",
                       help="NMI across cluster counts")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--k", dest="k_range", type=_k_range, default=_k_range("2:10"),
                   metavar="LO:HI", help="k range (default 2:10)")
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--out")
    p.add_argument("--csv", action="store_true")
    _add_reduction(p)
    _add_seed(p)
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("matrix",
                       help="robustness sweep over dims x backends x algorithms")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--dims", type=_int_list, default=_int_list("20,30,40,50"),
                   metavar="D[,D…]")
    p.add_argument("--backend", type=_str_list(_BACKENDS),
                   default=list(_BACKENDS), metavar="B[,B…]")
    p.add_argument("--algorithm", type=_str_list(_ALGORITHMS),
                   default=["kmeans"], metavar="A[,A…]")
    p.add_argument("--k", type=_k_value, default="auto")
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--out")
    p.add_argument("--csv", action="store_true")
    _add_seed(p)
    p.set_defaults(handler=_cmd_matrix)

    p = sub.add_parser("probe",
                       help="linear probe on a labeled embedding set")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out")
    p.add_argument("--save-model", help="write trained probe JSON here")
    _add_seed(p)
    p.set_defaults(handler=_cmd_probe)

    p = sub.add_parser("compare",
                       help="probe vs k-NN vs clustering on two corpora")
    p.add_argument("--in", dest="in_path", required=True,
                   help="EMB1 file of corpus A")
    p.add_argument("--in2", required=True, help="EMB1 file of corpus B")
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--algorithm", choices=_ALGORITHMS, default="kmeans")
    p.add_argument("--k", type=_k_value, default=2)
    p.add_argument("--knn-k", type=int, default=10)
    p.add_argument("--out")
    _add_reduction(p)
    _add_seed(p, "0,1,2,3,4")
    p.set_defaults(handler=_cmd_compare)

    p = sub.add_parser("characterize",
                       help="prompt-category characterization per dataset")
    p.add_argument("--in", dest="in_path", required=True,
                   help="EMB1 image embeddings")
    p.add_argument("--prompts", required=True, help="EMB1 prompt bank")
    p.add_argument("--all-images", action="store_true",
                   help="characterize all images, not only correctly "
                        "clustered ones")
    p.add_argument("--k", type=_k_value, default="auto")
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--algorithm", choices=_ALGORITHMS, default="kmeans")
    p.add_argument("--out")
    p.add_argument("--csv", action="store_true")
    _add_reduction(p)
    _add_seed(p)
    p.set_defaults(handler=_cmd_characterize)

    p = sub.add_parser("artifact-lab",
                       help="two-corpus artifact-channel experiment")
    p.add_argument("--res-a", type=int, default=100)
    p.add_argument("--res-b", type=int, default=640)
    p.add_argument("--n-per", type=int, default=600)
    p.add_argument("--final", type=int, default=64)
    p.add_argument("--mid", type=int, default=None,
                   help="two-step intermediate size (default final/2)")
    p.add_argument("--dims", type=int, default=20)
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--out")
    _add_seed(p)
    p.set_defaults(handler=_cmd_artifact_lab)

    return parser


def main(argv: list[str] | None = None) -> int:
    """Entry point; returns the process exit code."""
    threads = os.environ.get("BIASLENS_THREADS", "")
    if threads.strip():
        try:
            cap = int(threads)
        except ValueError:
            print(f"error: BIASLENS_THREADS must be an integer, "
                  f"got {threads!r}", file=sys.stderr)
            return 1
        if cap > 0:
            numba.set_num_threads(cap)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return 0 if (exc.code or 0) == 0 else 1
    if getattr(args, "handler", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


def console_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_entry()
