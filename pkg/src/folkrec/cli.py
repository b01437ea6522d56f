"""Command-line driver: stats, split, train, evaluate, recommend.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure. Every command is deterministic given identical files, flags, and
seed; all randomness flows from the single config seed through named
substreams.
"""

import argparse
import json
import sys
from pathlib import Path

from .dataset import (
    ManifestSplits,
    build_folksonomy,
    compute_stats,
    filter_tags,
    parse_assignments,
    read_manifest,
    split_interactions,
    write_manifest,
)
from .errors import ConfigError, DataError, FolkrecError, NumericalError, ParseError
from .evaluation import EvalConfig, evaluate, format_report, top_k, write_report_records
from .graph import build_graphs
from .model import load_snapshot, propagate, save_snapshot
from .training import parse_run_config, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

SPLIT_RATIOS = (0.6, 0.2, 0.2)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="folkrec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_stats = sub.add_parser("stats", help="dataset statistics after tag filtering")
    p_stats.add_argument("--input", required=True, help="tab-separated assignment file")
    p_stats.add_argument("--min-tag-count", type=int, default=5)

    p_split = sub.add_parser("split", help="freeze a train/validation/test split")
    p_split.add_argument("--input", required=True)
    p_split.add_argument("--out", required=True, help="output directory")
    p_split.add_argument("--min-tag-count", type=int, default=5)
    p_split.add_argument("--seed", type=int, default=2022)

    p_train = sub.add_parser("train", help="train embeddings from an assignment file")
    p_train.add_argument("--input", required=True)
    p_train.add_argument("--config", required=True, help="key = value config file")
    p_train.add_argument("--out", required=True, help="output directory")

    p_eval = sub.add_parser("evaluate", help="rank and score a frozen split")
    p_eval.add_argument("--snapshot", required=True)
    p_eval.add_argument("--split-manifest", required=True)
    p_eval.add_argument("--which", required=True, choices=("validation", "test"),
                        help="training split evaluation is refused")
    p_eval.add_argument("--cutoffs", default="5,10,15,20,25,30")
    p_eval.add_argument("--out", default=None, help="directory for report files")
    p_eval.add_argument("--standard-ndcg", action="store_true",
                        help="normalize by ideal DCG capped at the truth size")
    p_eval.add_argument("--compare", default=None,
                        help="JSON file of reference values to print side by side")

    p_rec = sub.add_parser("recommend", help="top-N items for one user")
    p_rec.add_argument("--snapshot", required=True)
    p_rec.add_argument("--split-manifest", required=True)
    p_rec.add_argument("--user", required=True, type=int, help="external user id")
    p_rec.add_argument("--n", type=int, default=10)

    return parser


def _load_folksonomy(input_path: str, min_tag_count: int):
    try:
        with open(input_path, "r", encoding="utf-8") as fh:
            records = parse_assignments(fh)
    except OSError as exc:
        raise DataError(f"cannot read input file {input_path}: {exc}") from exc
    records = filter_tags(records, min_tag_count)
    return build_folksonomy(records)


def cmd_stats(args) -> int:
    folksonomy = _load_folksonomy(args.input, args.min_tag_count)
    stats = compute_stats(folksonomy)
    print(f"users\t{stats.n_users}")
    print(f"items\t{stats.n_items}")
    print(f"tags\t{stats.n_tags}")
    print(f"assignments\t{stats.n_assignments}")
    print(f"sparsity\t{stats.sparsity:.2%}")
    return EXIT_OK


def cmd_split(args) -> int:
    folksonomy = _load_folksonomy(args.input, args.min_tag_count)
    split = split_interactions(folksonomy, SPLIT_RATIOS, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "split_manifest.tsv"
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        write_manifest(split, fh)
    print(f"wrote {manifest_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            run_cfg = parse_run_config(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc

    folksonomy = _load_folksonomy(args.input, run_cfg.min_tag_count)
    split = split_interactions(folksonomy, SPLIT_RATIOS, run_cfg.seed)
    graphs = build_graphs(split.train, split.n_users, split.n_items, split.n_tags)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "split_manifest.tsv", "w", encoding="utf-8", newline="\n") as fh:
        write_manifest(split, fh)

    model_cfg = run_cfg.model_config()
    with open(out_dir / "training_log.tsv", "w", encoding="utf-8", newline="\n") as log:
        log.write("# epoch\tbpr_loss\ttransrt_loss\tl2\tval_recall@20\n")

        class _Tee:
            def write(self, text: str) -> None:
                log.write(text)
                sys.stdout.write(text)

        table, report = train(split, graphs, run_cfg.train_config(), model_cfg, log_stream=_Tee())

    save_snapshot(str(out_dir / "snapshot.bin"), table, graphs, model_cfg, split.id_map)

    finals = propagate(graphs, table, model_cfg)
    val_report = evaluate(finals, "validation", split, EvalConfig())
    with open(out_dir / "validation_metrics.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_report(val_report))
    with open(out_dir / "validation_metrics.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        write_report_records(val_report, fh)

    best = f"epoch {report.best_epoch}" if report.best_epoch is not None else "final epoch"
    print(f"stopped: {report.stop_reason} ({best}); snapshot and reports in {out_dir}")
    return EXIT_OK


def _load_snapshot_and_manifest(snapshot_path: str, manifest_path: str):
    snapshot = load_snapshot(snapshot_path)
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = read_manifest(fh)
    except OSError as exc:
        raise DataError(f"cannot read split manifest {manifest_path}: {exc}") from exc
    for pairs in (manifest.train_pairs, manifest.validation_pairs, manifest.test_pairs):
        if pairs.size and (
            pairs[:, 0].max() >= snapshot.n_users or pairs[:, 1].max() >= snapshot.n_items
        ):
            raise DataError("snapshot/split mismatch: manifest ids exceed snapshot entity counts")
    manifest = ManifestSplits(
        train_pairs=manifest.train_pairs,
        validation_pairs=manifest.validation_pairs,
        test_pairs=manifest.test_pairs,
        n_users=snapshot.n_users,
        n_items=snapshot.n_items,
    )
    return snapshot, manifest


def cmd_evaluate(args) -> int:
    snapshot, manifest = _load_snapshot_and_manifest(args.snapshot, args.split_manifest)
    try:
        cutoffs = tuple(sorted(int(c) for c in args.cutoffs.split(",") if c.strip()))
        cfg = EvalConfig(cutoffs=cutoffs, standard_ndcg=args.standard_ndcg)
    except ValueError as exc:
        raise ConfigError(f"bad --cutoffs {args.cutoffs!r}: {exc}") from exc

    reference = None
    if args.compare:
        try:
            with open(args.compare, "r", encoding="utf-8") as fh:
                reference = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read reference file {args.compare}: {exc}") from exc
        if not isinstance(reference, dict):
            raise ConfigError(f"reference file {args.compare} must hold a JSON object")

    finals = propagate(snapshot.graphs, snapshot.table, snapshot.config)
    report = evaluate(finals, args.which, manifest, cfg)
    sys.stdout.write(format_report(report, reference=reference))

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / f"{args.which}_metrics.txt", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(format_report(report))
        with open(out_dir / f"{args.which}_metrics.jsonl", "w", encoding="utf-8", newline="\n") as fh:
            write_report_records(report, fh)
    return EXIT_OK


def cmd_recommend(args) -> int:
    snapshot, manifest = _load_snapshot_and_manifest(args.snapshot, args.split_manifest)
    if args.n < 1:
        raise ConfigError("--n must be >= 1")
    id_map = snapshot.id_map
    if args.user not in id_map.user_forward:
        raise DataError(f"unknown user id {args.user}")
    user = id_map.user_forward[args.user]

    train_pairs = manifest.train_pairs
    exclusions = train_pairs[train_pairs[:, 0] == user, 1]

    finals = propagate(snapshot.graphs, snapshot.table, snapshot.config)
    scores = finals.item @ finals.user[user]
    ranked = top_k(user, finals, args.n, exclusions)
    for rank, item in enumerate(ranked, start=1):
        external = int(id_map.item_ids[item])
        print(f"{rank}\t{external}\t{scores[item]:.6g}")
    return EXIT_OK


_COMMANDS = {
    "stats": cmd_stats,
    "split": cmd_split,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "recommend": cmd_recommend,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FolkrecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
