"""Command-line pipeline: prepare -> [extractor] -> aggregate -> reports.

Subcommands are coupled only through files (manifest JSONL, CTE1
streams, TSR1 stores), so each stage can be rerun independently and the
encoder-side extractor can run as a separate process between prepare and
aggregate. A JSON config file provides any flag's value; an explicitly
passed flag wins over the config.

Exit codes: 0 success, 1 runtime error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

from . import aggregate as agg
from . import corpus as corpus_mod
from . import evaluation as eval_mod
from . import shift as shift_mod
from . import tokenizer as tok_mod
from .embedding_io import open_stream, write_stream_jsonl, write_stream_path
from .errors import ConfigError, SemShiftError

FORMATS = ("csv", "json", "jsonl")


@dataclass
class RunConfig:
    corpus: str | None = None
    periods: object = None  # preset name, config path, or inline list
    vocab: str | None = None
    lowercase: bool | None = None
    strip_urls: bool | None = None
    shuffle: bool | None = None
    limit: int | None = None
    min_count: int | None = None
    streams: list[str] | None = None
    stream_out: str | None = None
    stores: list[str] | None = None
    out_dir: str | None = None
    seed: int | None = None
    format: str | None = None
    threads: int | None = None
    strict: bool | None = None

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path}: invalid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path}: expected a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"config {path}: unknown keys {sorted(unknown)}")
        return cls(**raw)

    def override(self, args: argparse.Namespace) -> "RunConfig":
        """Apply explicitly-passed CLI flags on top of the config."""
        for f in fields(self):
            value = getattr(args, f.name, None)
            if value is not None:
                setattr(self, f.name, value)
        return self

    def require(self, name: str):
        value = getattr(self, name)
        if value is None:
            raise ConfigError(f"missing required setting {name!r} (flag --{name.replace('_', '-')})")
        return value


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} file not found: {p}")
    return p


def _resolve_periods(cfg: RunConfig) -> list[corpus_mod.PeriodConfig]:
    raw = cfg.require("periods")
    if isinstance(raw, list):
        return corpus_mod.periods_from_obj(raw)
    if isinstance(raw, str):
        if raw in corpus_mod.PRESETS:
            return corpus_mod.get_preset(raw)
        return corpus_mod.load_periods(_require_file(raw, "periods"))
    raise ConfigError(f"periods must be a preset name, path, or inline list, got {raw!r}")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _slug(label: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9._-]+", "-", label).strip("-")
    return cleaned.lower() or "x"


def _fmt(cfg: RunConfig) -> str:
    fmt = cfg.format or "csv"
    if fmt not in FORMATS:
        raise ConfigError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    return fmt


def _write_rows(rows: list[dict], out: Path, stem: str, fmt: str) -> Path:
    if fmt == "json":
        path = out / f"{stem}.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")
        return path
    path = out / f"{stem}.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if rows:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    return path


def _plot_enabled(args) -> bool:
    return not getattr(args, "no_plot", False)


# --- subcommands ---


def cmd_prepare(cfg: RunConfig, args) -> int:
    corpus_path = _require_file(cfg.require("corpus"), "corpus")
    vocab = tok_mod.load_vocab(_require_file(cfg.require("vocab"), "vocab"))
    periods = _resolve_periods(cfg)
    lowercase = bool(cfg.lowercase)
    rules = corpus_mod.PreprocessRules(
        strip_urls=True if cfg.strip_urls is None else bool(cfg.strip_urls),
        lowercase=lowercase,
    )
    limit = cfg.limit or tok_mod.DEFAULT_CONTENT_LIMIT
    if limit < 1:
        raise ConfigError(f"content limit must be >= 1, got {limit}")
    out = _out_dir(cfg)
    manifest_path = Path(args.out) if args.out else out / "manifest.jsonl"

    docs = corpus_mod.load_corpus(corpus_path)
    if cfg.shuffle:
        docs = corpus_mod.shuffle(docs, cfg.seed or 0)

    doc_counts: dict[str, int] = {p.label: 0 for p in periods}
    token_counts: dict[str, int] = {p.label: 0 for p in periods}
    skipped = 0

    def sequences():
        nonlocal skipped
        for doc in docs:
            label = corpus_mod.assign_period(doc, periods)
            if label is None:
                skipped += 1
                continue
            text = corpus_mod.preprocess(doc.text, rules)
            doc_counts[label] += 1
            for seq in tok_mod.tokenize_document(text, doc.id, label, vocab, lowercase, limit):
                token_counts[label] += len(seq)
                yield seq

    n_sequences = tok_mod.write_manifest(sequences(), manifest_path)

    rows = [
        {
            "period": p.label,
            "documents": doc_counts[p.label],
            "tokens": token_counts[p.label],
            "tokens_millions": round(token_counts[p.label] / 1e6, 1),
        }
        for p in periods
    ]
    total = {
        "period": "Entire corpus",
        "documents": sum(doc_counts.values()),
        "tokens": sum(token_counts.values()),
        "tokens_millions": round(sum(token_counts.values()) / 1e6, 1),
    }
    width = max(14, *(len(r["period"]) for r in rows + [total]))
    print(f"{'Period':<{width}}  {'Documents':>9}  {'Tokens':>12}  {'Tokens (M)':>10}")
    for r in rows + [total]:
        print(
            f"{r['period']:<{width}}  {r['documents']:>9}  {r['tokens']:>12}  "
            f"{r['tokens_millions']:>10.1f}"
        )
    if skipped:
        print(f"{skipped} document(s) outside all periods (skipped)")
    stats = {
        "periods": rows,
        "total": total,
        "skipped_documents": skipped,
        "sequences": n_sequences,
        "manifest": str(manifest_path),
    }
    with open(out / "prepare_stats.json", "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2)
        fh.write("\n")
    return 0


def _shard_builder(path, dim, scope, unk_id, exclude) -> agg.RepresentationBuilder:
    builder = agg.RepresentationBuilder(dim, scope, unk_id, exclude)
    with open_stream(path) as (header, blocks):
        builder.add_stream(header, blocks)
    return builder


def cmd_aggregate(cfg: RunConfig, args) -> int:
    stream_paths = [str(_require_file(p, "stream")) for p in cfg.require("streams")]
    scope = args.scope
    min_count = cfg.min_count if cfg.min_count is not None else agg.DEFAULT_MIN_COUNT
    if min_count < 1:
        raise ConfigError(f"min_count must be >= 1, got {min_count}")
    unk_id = None
    if cfg.vocab:
        unk_id = tok_mod.load_vocab(_require_file(cfg.vocab, "vocab")).unk_id
    out = _out_dir(cfg)

    with open_stream(stream_paths[0]) as (first_header, _):
        dim = first_header.dim

    threads = cfg.threads or 1
    if threads > 1 and len(stream_paths) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            builders = list(
                pool.map(lambda p: _shard_builder(p, dim, scope, unk_id, None), stream_paths)
            )
        builder = builders[0]
        for other in builders[1:]:
            builder.merge(other)
    else:
        builder = agg.RepresentationBuilder(dim, scope, unk_id, None)
        for path in stream_paths:
            with open_stream(path) as (header, blocks):
                builder.add_stream(header, blocks)

    stores = builder.finalize(min_count)
    total_words = 0
    store_files: dict[str, str] = {}
    for scope_label in sorted(stores):
        store = stores[scope_label]
        path = out / f"store_{_slug(scope_label)}.tsr1"
        agg.write_stores([store], path)
        store_files[scope_label] = str(path)
        total_words += len(store)
        print(f"{scope_label}: {len(store)} words (count >= {min_count}) -> {path}")
    if builder.usages_skipped:
        print(f"{builder.usages_skipped} usage(s) skipped (unknown-piece words)")
    if args.export_csv:
        csv_path = out / "representations.csv"
        n = agg.export_stores_csv(stores.values(), csv_path)
        print(f"exported {n} rows -> {csv_path}")
    with open(out / "aggregate_index.json", "w", encoding="utf-8") as fh:
        json.dump(
            {"dim": dim, "min_count": min_count, "stores": store_files},
            fh,
            indent=2,
        )
        fh.write("\n")
    return 0


def _load_stores(cfg: RunConfig) -> dict[str, agg.RepresentationStore]:
    paths = [str(_require_file(p, "store")) for p in cfg.require("stores")]
    return agg.load_store_files(paths)


def cmd_shift(cfg: RunConfig, args) -> int:
    stores = _load_stores(cfg)
    out = _out_dir(cfg)
    fmt = _fmt(cfg)
    words = None
    if args.words:
        words = [w.strip() for w in args.words.split(",") if w.strip()]
    scores = shift_mod.rank_shifts(args.period_a, args.period_b, stores, words=words)
    rows = [
        {
            "word": s.word,
            "period_a": s.period_a,
            "period_b": s.period_b,
            "distance": s.distance,
            "count_a": s.count_a,
            "count_b": s.count_b,
        }
        for s in scores
    ]
    path = _write_rows(rows, out, "shift_scores", fmt)
    print(f"{len(rows)} shift scores -> {path}")
    for s in scores[: args.top]:
        print(f"  {s.word}: {s.distance:.4f} (n={s.count_a}/{s.count_b})")
    if _plot_enabled(args):
        from . import plots

        plots.shift_figure(scores, out / "shift_scores.png", top_m=args.top)
        print(f"figure -> {out / 'shift_scores.png'}")
    return 0


def cmd_neighbors(cfg: RunConfig, args) -> int:
    stores = _load_stores(cfg)
    global_store = stores.get(corpus_mod.GLOBAL_SCOPE)
    if global_store is None:
        raise ConfigError("no GLOBAL store among the given store files")
    out = _out_dir(cfg)
    fmt = _fmt(cfg)
    result = shift_mod.neighbors(args.target, global_store, k=args.k, threshold=args.threshold)
    rows = [
        {
            "target": result.target,
            "word": e.word,
            "similarity": e.similarity,
            "normld": e.norm_ld,
            "rank": rank,
        }
        for rank, e in enumerate(result.entries, start=1)
    ]
    stem = f"neighbors_{_slug(args.target)}"
    path = _write_rows(rows, out, stem, fmt)
    print(f"{len(rows)} neighbors of {args.target!r} -> {path}")
    if _plot_enabled(args):
        from . import plots

        plots.neighbors_figure(result, out / f"{stem}.png")
        print(f"figure -> {out / (stem + '.png')}")
    return 0


def _period_order(cfg: RunConfig, stores) -> list[str]:
    if cfg.periods is not None:
        return [p.label for p in _resolve_periods(cfg)]
    return sorted(label for label in stores if label != corpus_mod.GLOBAL_SCOPE)


def cmd_trajectory(cfg: RunConfig, args) -> int:
    stores = _load_stores(cfg)
    out = _out_dir(cfg)
    fmt = _fmt(cfg)
    order = _period_order(cfg, stores)
    seeds = [w.strip() for w in args.seed_words.split(",") if w.strip()]
    if not seeds:
        raise ConfigError("no seed words given")
    trajectories = [shift_mod.trajectory(args.target, seed, order, stores) for seed in seeds]
    rows = [
        {
            "target": t.target,
            "seed": t.seed,
            "period": p.period,
            "similarity": p.similarity,
        }
        for t in trajectories
        for p in t.points
    ]
    stem = f"trajectory_{_slug(args.target)}"
    path = _write_rows(rows, out, stem, fmt)
    print(f"{len(rows)} trajectory points -> {path}")
    warned = False
    for t in trajectories:
        if t.missing_periods:
            print(f"  {t.seed}: missing in {', '.join(t.missing_periods)}")
            warned = True
        if t.warning:
            print(f"  warning: {t.warning}")
            warned = True
    if _plot_enabled(args):
        from . import plots

        plots.trajectory_figure(trajectories, order, out / f"{stem}.png")
        print(f"figure -> {out / (stem + '.png')}")
    if warned and cfg.strict:
        print("strict mode: incomplete trajectories", file=sys.stderr)
        return 1
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    stores = _load_stores(cfg)
    gold = eval_mod.load_gold(_require_file(args.gold, "gold"))
    out = _out_dir(cfg)
    casefold = True if cfg.lowercase is None else bool(cfg.lowercase)
    report = eval_mod.evaluate(
        stores,
        gold,
        args.period_a,
        args.period_b,
        method=args.method,
        casefold=casefold,
        seed=cfg.seed or 0,
    )
    report_path = out / "eval_report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    pairs_rows = [
        {"word": w, "gold": g, "distance": d} for w, g, d in report.pairs
    ]
    pairs_path = _write_rows(pairs_rows, out, "eval_pairs", "csv" if _fmt(cfg) == "jsonl" else _fmt(cfg))
    print(
        f"r = {report.pearson_r:.4f}, p = {report.p_value:.3g} ({report.method}), "
        f"{report.n_evaluated} evaluated, {report.n_missing} missing"
    )
    print(f"report -> {report_path}; pairs -> {pairs_path}")
    if report.missing:
        print("missing gold words: " + ", ".join(report.missing))
    if _plot_enabled(args):
        from . import plots

        plots.eval_figure(report, out / "eval_report.png")
        print(f"figure -> {out / 'eval_report.png'}")
    if report.missing and cfg.strict:
        print("strict mode: gold words missing from the stores", file=sys.stderr)
        return 1
    return 0


def cmd_synth(cfg: RunConfig, args) -> int:
    spec = eval_mod.SynthSpec(
        n_words=args.words,
        dim=args.dim,
        usages_per_period=args.usages,
        noise_sigma=args.sigma,
        n_planted=args.planted,
        angle=args.angle,
        seed=cfg.seed if cfg.seed is not None else 42,
    )
    out = _out_dir(cfg)
    stream_path = Path(args.out) if args.out else out / "synthetic.cte1"
    gold_path = Path(args.gold_out) if args.gold_out else out / "synthetic_gold.tsv"
    header, blocks, gold = eval_mod.synth_stream(spec)
    if _fmt(cfg) == "jsonl":
        with open(stream_path, "w", encoding="utf-8") as fh:
            write_stream_jsonl(header, blocks, fh)
    else:
        write_stream_path(header, blocks, stream_path)
    eval_mod.write_gold(gold, gold_path)
    print(f"stream -> {stream_path} ({len(blocks)} blocks); gold -> {gold_path}")
    return 0


# --- parser wiring ---


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run-config file; flags override it")
    common.add_argument("--out-dir", dest="out_dir", help="output directory (default .)")
    common.add_argument("--format", choices=FORMATS, help="report/stream output format")
    common.add_argument("--threads", type=int, help="worker cap for shard aggregation")
    common.add_argument("--seed", type=int, help="seed for shuffling/synthesis/permutation")
    common.add_argument("--strict", action=argparse.BooleanOptionalAction, default=None)
    common.add_argument(
        "--no-plot", action="store_true", help="skip figure rendering in report commands"
    )

    parser = argparse.ArgumentParser(
        prog="semshift",
        description="Detect and quantify semantic shift of words across time periods.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="tokenize a corpus into a manifest")
    p.add_argument("--corpus", help="JSONL corpus file")
    p.add_argument("--periods", help="JSON period config file")
    p.add_argument("--preset", choices=sorted(corpus_mod.PRESETS), help="shipped period preset")
    p.add_argument("--vocab", help="subword vocabulary file")
    p.add_argument("--lowercase", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--strip-urls", dest="strip_urls", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--shuffle", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--limit", type=int, help="content tokens per sequence")
    p.add_argument("--out", help="manifest output path")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("aggregate", parents=[common], help="build representation stores")
    p.add_argument("--stream", dest="streams", action="append", help="embedding stream (repeatable)")
    p.add_argument("--vocab", help="vocabulary file, enables unknown-piece filtering")
    p.add_argument("--scope", choices=(agg.SCOPE_PER_PERIOD, agg.SCOPE_GLOBAL, agg.SCOPE_BOTH), default=agg.SCOPE_BOTH)
    p.add_argument("--min-count", dest="min_count", type=int)
    p.add_argument("--export-csv", dest="export_csv", action="store_true")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("shift", parents=[common], help="rank words by cosine distance between two periods")
    p.add_argument("--store", dest="stores", action="append", help="TSR1 store file (repeatable)")
    p.add_argument("--period-a", required=True)
    p.add_argument("--period-b", required=True)
    p.add_argument("--words", help="comma-separated words (default: all shared words)")
    p.add_argument("--top", type=int, default=10, help="rows to print/plot")
    p.set_defaults(func=cmd_shift)

    p = sub.add_parser("neighbors", parents=[common], help="nearest words to a target, derivative-filtered")
    p.add_argument("--store", dest="stores", action="append")
    p.add_argument("--target", required=True)
    p.add_argument("-k", type=int, default=50)
    p.add_argument("--threshold", type=float, default=0.5, help="max normalized Levenshtein similarity")
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("trajectory", parents=[common], help="target-seed similarity per period")
    p.add_argument("--store", dest="stores", action="append")
    p.add_argument("--target", required=True)
    p.add_argument("--seed-words", dest="seed_words", required=True, help="comma-separated seed words")
    p.add_argument("--periods", help="JSON period config file (sets period order)")
    p.add_argument("--preset", choices=sorted(corpus_mod.PRESETS))
    p.set_defaults(func=cmd_trajectory)

    p = sub.add_parser("eval", parents=[common], help="correlate distances with a gold shift index")
    p.add_argument("--store", dest="stores", action="append")
    p.add_argument("--gold", required=True, help="TSV gold file: word<TAB>index")
    p.add_argument("--period-a", required=True)
    p.add_argument("--period-b", required=True)
    p.add_argument("--method", choices=(eval_mod.P_VALUE_T_DIST, eval_mod.P_VALUE_PERMUTATION), default=eval_mod.P_VALUE_T_DIST)
    p.add_argument("--lowercase", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", parents=[common], help="generate a planted-shift synthetic stream")
    p.add_argument("--words", type=int, default=20)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--usages", type=int, default=200)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--planted", type=int, default=1)
    p.add_argument("--angle", type=float, default=1.5707963267948966)
    p.add_argument("--out", help="stream output path")
    p.add_argument("--gold-out", dest="gold_out", help="gold TSV output path")
    p.set_defaults(func=cmd_synth)

    return parser


def _merge_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "preset", None):
        if getattr(args, "periods", None):
            raise ConfigError("--preset and --periods are mutually exclusive")
        args.periods = args.preset
    return cfg.override(args)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_config(args)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SemShiftError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
