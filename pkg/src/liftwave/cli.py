"""Command-line entry points: preprocess, train, transform, verify, export.

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.
Every run writes a resolved-config file with the effective settings into its
output directory.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import glob
import json
import logging
import os
import sys
import time
from typing import Optional

import numpy as np

from .datasets import (
    DataError,
    GraphDataset,
    NodeDataset,
    kfold_split,
    load_citation,
    load_tu,
    synth_cycles_vs_trees,
    synth_sbm_node,
)
from .filtering import sparsity_ratio, transform_signal
from .models import (
    GraphModelConfig,
    NodeModelConfig,
    build_node_model,
    run_kfold,
    train_node_model,
)
from .preprocess import (
    load_preprocessed,
    preprocess_graph_dataset,
    preprocess_node_dataset,
)
from .verify import SUITES, run_suites

logger = logging.getLogger("liftwave")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3

CITATION_NAMES = ("cora", "citeseer", "pubmed")
SYNTH_NODE = "sbm"
SYNTH_GRAPH = "cycles-trees"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _data_root(args) -> str:
    root = args.data_root or os.environ.get("LIFTWAVE_DATA", "")
    if not root:
        raise DataError("no dataset root: pass --data-root or set LIFTWAVE_DATA")
    return root


def _load_node_dataset(args) -> NodeDataset:
    name = args.dataset.lower()
    if name in CITATION_NAMES:
        return load_citation(_data_root(args), name)
    if name == SYNTH_NODE:
        return synth_sbm_node(
            n_per_block=args.sbm_block_size,
            p_in=args.sbm_p_in,
            p_out=args.sbm_p_out,
            seed=args.data_seed,
        )
    raise DataError(f"unknown node dataset {args.dataset!r}")


def _load_graph_dataset(args) -> GraphDataset:
    name = args.dataset
    if name.lower() == SYNTH_GRAPH:
        return synth_cycles_vs_trees(args.n_graphs, seed=args.data_seed)
    return load_tu(_data_root(args), name)


def _run_dir(args, tag: str) -> str:
    if args.run_dir:
        path = args.run_dir
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        path = os.path.join(args.out, f"{stamp}-{tag}-seed{args.seed}")
    os.makedirs(path, exist_ok=True)
    return path


def _write_resolved_config(run_dir: str, args, extra: Optional[dict] = None):
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    if extra:
        resolved.update(extra)
    with open(os.path.join(run_dir, "resolved-config.json"), "w") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True, default=str)


def _basis_sparsity(pg) -> float:
    fwd = pg.basis.forward
    if fwd.is_sparse:
        return 1.0 - fwd.data.nnz / fwd.dimension**2
    return sparsity_ratio(fwd.data, 1e-12)


def cmd_preprocess(args) -> int:
    run_dir = _run_dir(args, "preprocess")
    _write_resolved_config(run_dir, args)
    cache_dir = args.cache_dir or os.path.join(run_dir, "cache")
    name = args.dataset.lower()
    if name in CITATION_NAMES or name == SYNTH_NODE:
        ds = _load_node_dataset(args)
        _, pg, hit = preprocess_node_dataset(
            ds, args.scale, args.basis_threshold, args.seed, cache_dir=cache_dir
        )
        print("cache up to date" if hit else f"cache written to {cache_dir}")
        print(f"dataset: {ds.name}  N={pg.graph.num_nodes}  edges={pg.graph.num_edges}")
        print(f"basis zero fraction: {_basis_sparsity(pg):.4f}")
        print(
            f"smoothness range: [{pg.smoothness.min():.6f}, {pg.smoothness.max():.6f}]"
        )
        print(
            f"split sizes: odd={len(pg.split.odd_nodes)} even={len(pg.split.even_nodes)} "
            f"cross-edges={pg.split.cross_odd_even.nnz}"
        )
    else:
        ds = _load_graph_dataset(args)
        pgs = preprocess_graph_dataset(
            ds, args.scale, args.basis_threshold, args.seed, cache_dir=cache_dir
        )
        cross = [pg.split.cross_odd_even.nnz for pg in pgs]
        print(f"cache written to {cache_dir}")
        print(f"dataset: {ds.name}  graphs={len(pgs)}  classes={ds.num_classes}")
        print(f"mean basis zero fraction: {np.mean([_basis_sparsity(p) for p in pgs]):.4f}")
        print(f"mean cross edges per graph: {np.mean(cross):.2f}")
    return EXIT_OK


def _summarize(accs, run_dir: str, extra: Optional[dict] = None) -> int:
    summary = {
        "runs": len(accs),
        "mean_test_accuracy": float(np.mean(accs)),
        "std_test_accuracy": float(np.std(accs)),
        "accuracies": [float(a) for a in accs],
    }
    if extra:
        summary.update(extra)
    with open(os.path.join(run_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    print(
        f"test accuracy over {len(accs)} runs: "
        f"{summary['mean_test_accuracy']:.4f} +/- {summary['std_test_accuracy']:.4f}"
    )
    return EXIT_OK


def _node_config(args) -> NodeModelConfig:
    return NodeModelConfig(
        hidden=args.hidden,
        scale_t=args.scale,
        basis_threshold=args.basis_threshold,
        theta=args.theta,
        blocks=args.blocks,
        lr=args.lr,
        weight_decay=args.weight_decay,
        dropout=args.dropout,
        max_epochs=args.max_epochs,
        patience=args.patience,
        split_seed=args.seed,
        variant=args.variant,
    )


def _node_seed_worker(payload):
    """Run one training seed in a worker process; caches make reload cheap."""
    import argparse

    args_dict, seed, metrics_path, cache_dir = payload
    args = argparse.Namespace(**args_dict)
    ds = _load_node_dataset(args)
    cfg = _node_config(args)
    data, pg, _ = preprocess_node_dataset(
        ds, cfg.scale_t, cfg.basis_threshold, cfg.split_seed, cache_dir=cache_dir
    )
    model = build_node_model(cfg, pg, ds.num_classes, seed=seed)
    metrics = train_node_model(model, data, seed=seed, metrics_path=metrics_path)
    return seed, metrics.test_accuracy, metrics.best_epoch, len(metrics.epochs), metrics.parameter_count


def cmd_train_node(args) -> int:
    run_dir = _run_dir(args, f"node-{args.dataset}")
    ds = _load_node_dataset(args)
    cfg = _node_config(args)
    _write_resolved_config(run_dir, args, {"config": dataclasses.asdict(cfg)})
    cache_dir = args.cache_dir or os.path.join(run_dir, "cache")
    if not args.auto_preprocess and not glob.glob(os.path.join(cache_dir, "*.lwc")):
        raise DataError(f"no cache under {cache_dir}; rerun with --auto-preprocess")
    data, pg, _ = preprocess_node_dataset(
        ds, cfg.scale_t, cfg.basis_threshold, cfg.split_seed, cache_dir=cache_dir
    )

    payloads = [
        (
            {k: v for k, v in vars(args).items() if k != "func"},
            args.seed + k,
            os.path.join(run_dir, f"run{k}.jsonl"),
            cache_dir,
        )
        for k in range(args.seeds)
    ]
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_node_seed_worker, payloads))
    else:
        rows = []
        for payload in payloads:
            seed = payload[1]
            model = build_node_model(cfg, pg, ds.num_classes, seed=seed)
            metrics = train_node_model(model, data, seed=seed, metrics_path=payload[2])
            rows.append(
                (seed, metrics.test_accuracy, metrics.best_epoch, len(metrics.epochs), metrics.parameter_count)
            )
    accs = []
    for seed, acc, best, n_epochs, n_params in rows:
        accs.append(acc)
        print(
            f"seed {seed}: test acc {acc:.4f} "
            f"(best epoch {best}, {n_epochs} epochs, {n_params} params)"
        )
    return _summarize(accs, run_dir, {"variant": cfg.variant, "dataset": ds.name})


def _graph_config(args) -> GraphModelConfig:
    return GraphModelConfig(
        hidden=args.hidden,
        scale_t=args.scale,
        basis_threshold=args.basis_threshold,
        theta=args.theta,
        blocks=args.blocks,
        lr=args.lr,
        weight_decay=args.weight_decay,
        dropout=args.dropout,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        split_seed=args.seed,
        variant=args.variant,
    )


def _graph_fold_worker(payload):
    import argparse

    args_dict, rotation, metrics_dir, cache_dir = payload
    args = argparse.Namespace(**args_dict)
    ds = _load_graph_dataset(args)
    cfg = _graph_config(args)
    pgs = preprocess_graph_dataset(
        ds, cfg.scale_t, cfg.basis_threshold, cfg.split_seed, cache_dir=cache_dir
    )
    folds = kfold_split(ds, seed=args.seed)
    results = run_kfold(
        cfg, pgs, ds, folds, seed=args.seed, rotations=[rotation], metrics_dir=metrics_dir
    )
    m = results[0]
    return rotation, m.test_accuracy, len(m.epochs)


def cmd_train_graph(args) -> int:
    run_dir = _run_dir(args, f"graph-{args.dataset}")
    ds = _load_graph_dataset(args)
    cfg = _graph_config(args)
    _write_resolved_config(run_dir, args, {"config": dataclasses.asdict(cfg)})
    cache_dir = args.cache_dir or os.path.join(run_dir, "cache")
    if not args.auto_preprocess and not glob.glob(os.path.join(cache_dir, "*.lwc")):
        raise DataError(f"no cache under {cache_dir}; rerun with --auto-preprocess")
    pgs = preprocess_graph_dataset(
        ds, cfg.scale_t, cfg.basis_threshold, cfg.split_seed, cache_dir=cache_dir
    )
    rotations = list(range(args.folds))
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        base = {k: v for k, v in vars(args).items() if k != "func"}
        payloads = [(base, r, run_dir, cache_dir) for r in rotations]
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = sorted(pool.map(_graph_fold_worker, payloads))
    else:
        folds = kfold_split(ds, seed=args.seed)
        results = run_kfold(
            cfg, pgs, ds, folds, seed=args.seed, rotations=rotations, metrics_dir=run_dir
        )
        rows = [(r, m.test_accuracy, len(m.epochs)) for r, m in zip(rotations, results)]
    for r, acc, n_epochs in rows:
        print(f"fold {r}: test acc {acc:.4f} ({n_epochs} epochs)")
    return _summarize(
        [acc for _, acc, _ in rows], run_dir, {"variant": cfg.variant, "dataset": ds.name}
    )


def cmd_transform(args) -> int:
    pg = load_preprocessed(args.cache, source_graph=None)
    signal = np.loadtxt(args.signal, dtype=np.float64, ndmin=1)
    if len(signal) != pg.graph.num_nodes:
        raise DataError(
            f"signal has {len(signal)} values, graph has {pg.graph.num_nodes} nodes"
        )
    report = transform_signal(
        signal, pg.basis, pg.split, theta=args.theta, lifting_blocks=args.lifting_blocks
    )
    out_path = args.out or (args.signal + ".filtered")
    np.savetxt(out_path, report.output)
    print(f"wrote {out_path}")
    print(f"coefficient sparsity before lifting: {report.coeff_sparsity_before_lift:.4f}")
    if args.lifting_blocks:
        print(f"coefficient sparsity after lifting:  {report.coeff_sparsity_after_lift:.4f}")
        print(f"detail sparsity: {report.detail_sparsity:.4f}")
    print(f"coefficient sparsity after thresholding: {report.filtered_sparsity:.4f}")
    print(f"reconstruction error vs input: {report.reconstruction_error:.3e}")
    return EXIT_OK


def cmd_verify(args) -> int:
    reports = run_suites(
        names=args.suite or None, seed=args.seed, grid=args.grid, fault=args.inject_fault
    )
    for rep in reports:
        print(rep.line())
    if args.report:
        payload = [dataclasses.asdict(r) for r in reports]
        with open(args.report, "w") as fh:
            json.dump(payload, fh, indent=2)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY


def cmd_export(args) -> int:
    run_files = sorted(glob.glob(os.path.join(args.runs, "**", "*.jsonl"), recursive=True))
    if not run_files:
        raise DataError(f"no metrics files under {args.runs}")
    os.makedirs(args.out, exist_ok=True)
    epoch_rows = []
    summary_rows = []
    for path in run_files:
        run = os.path.relpath(path, args.runs)
        with open(path) as fh:
            for line in fh:
                rec = json.loads(line)
                if rec.get("type") == "epoch":
                    epoch_rows.append({"run": run, **rec})
                elif rec.get("type") == "summary":
                    summary_rows.append({"run": run, **rec})

    def write_csv(name, rows):
        if not rows:
            return
        keys = sorted({k for row in rows for k in row})
        with open(os.path.join(args.out, name), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            writer.writerows(rows)

    write_csv("epochs.csv", epoch_rows)
    write_csv("summary.csv", summary_rows)
    print(
        f"exported {len(summary_rows)} run summaries and "
        f"{len(epoch_rows)} epoch rows to {args.out}"
    )
    return EXIT_OK


def _add_common_data_args(p):
    p.add_argument("--dataset", required=True, help="dataset name")
    p.add_argument("--data-root", default=None, help="dataset directory (or $LIFTWAVE_DATA)")
    p.add_argument("--data-seed", type=int, default=0, help="seed for synthetic datasets")
    p.add_argument("--sbm-block-size", type=int, default=50)
    p.add_argument("--sbm-p-in", type=float, default=0.3)
    p.add_argument("--sbm-p-out", type=float, default=0.02)
    p.add_argument("--n-graphs", type=int, default=200, help="synthetic graph count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs", help="output root directory")
    p.add_argument("--run-dir", default=None, help="exact output directory (overrides --out)")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for seeds/folds")


def _add_common_model_args(p, node: bool):
    p.add_argument("--scale", type=float, default=0.7, help="diffusion scale t")
    p.add_argument("--basis-threshold", type=float, default=1e-6 if node else 0.01)
    p.add_argument("--theta", type=float, default=0.001 if node else 0.01)
    p.add_argument("--blocks", type=int, default=1, help="lifting blocks per layer")
    p.add_argument("--hidden", type=int, default=16 if node else 32)
    p.add_argument("--lr", type=float, default=0.02 if node else 0.001)
    p.add_argument("--weight-decay", type=float, default=1e-3 if node else 0.0)
    p.add_argument("--dropout", type=float, default=0.8 if node else 0.5)
    p.add_argument("--max-epochs", type=int, default=1000)
    p.add_argument("--patience", type=int, default=100 if node else 50)
    p.add_argument(
        "--variant",
        default="full",
        choices=["full", "fixed_lifting", "no_lifting", "gwnn_diag", "t_gwnn"],
    )
    p.add_argument("--auto-preprocess", action="store_true", default=True)
    p.add_argument("--no-auto-preprocess", dest="auto_preprocess", action="store_false")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="liftwave", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_pre = sub.add_parser("preprocess", help="build and cache wavelet bases and splits")
    _add_common_data_args(p_pre)
    p_pre.add_argument("--scale", type=float, default=0.7)
    p_pre.add_argument("--basis-threshold", type=float, default=1e-6)
    p_pre.set_defaults(func=cmd_preprocess)

    p_train = sub.add_parser("train", help="train a model")
    train_sub = p_train.add_subparsers(dest="task", required=True)

    p_node = train_sub.add_parser("node", help="node classification")
    _add_common_data_args(p_node)
    _add_common_model_args(p_node, node=True)
    p_node.add_argument("--seeds", type=int, default=1, help="number of seeds to run")
    p_node.set_defaults(func=cmd_train_node)

    p_graph = train_sub.add_parser("graph", help="graph classification")
    _add_common_data_args(p_graph)
    _add_common_model_args(p_graph, node=False)
    p_graph.add_argument("--batch-size", type=int, default=32)
    p_graph.add_argument("--folds", type=int, default=10)
    p_graph.set_defaults(func=cmd_train_graph)

    p_tr = sub.add_parser("transform", help="filter one signal through the pipeline")
    p_tr.add_argument("--cache", required=True, help="preprocessing cache file")
    p_tr.add_argument("--signal", required=True, help="text file, one value per node")
    p_tr.add_argument("--theta", type=float, default=0.0)
    p_tr.add_argument("--lifting-blocks", type=int, default=0)
    p_tr.add_argument("--out", default=None)
    p_tr.set_defaults(func=cmd_transform)

    p_ver = sub.add_parser("verify", help="run the property verification suites")
    p_ver.add_argument("--suite", action="append", choices=sorted(SUITES), default=None)
    p_ver.add_argument("--grid", default="full", choices=["full", "small"])
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--report", default=None, help="write a JSON report here")
    p_ver.add_argument(
        "--inject-fault",
        default=None,
        choices=["flip-update-sign"],
        help="test-only fault injection to demonstrate suite sensitivity",
    )
    p_ver.set_defaults(func=cmd_verify)

    p_exp = sub.add_parser("export", help="aggregate metrics files into CSV")
    p_exp.add_argument("--runs", required=True, help="directory containing *.jsonl metrics")
    p_exp.add_argument("--out", required=True, help="directory for the CSV files")
    p_exp.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    from .cache import CacheFormatError
    from .graphs import GraphError
    from .models import TrainingError, VariantError
    from .optim import OptimizerError

    try:
        return args.func(args)
    except (DataError, OSError, CacheFormatError, GraphError, VariantError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, OptimizerError) as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
