"""Command-line surface.

Every command is a single deterministic process: inputs plus the seed
fully determine the outputs, outputs only go to paths that do not exist
yet, and the resolved configuration is written next to each output so a
run can be replayed later.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .corpus import (
    ingest_alpaca,
    ingest_dolly,
    ingest_open_assistant,
    ingest_stack_exchange,
    ingest_wikihow,
    read_store,
    write_store,
)
from .errors import DataError, InstructMineError, UsageError
from .indicators import INDICATOR_NAMES, aggregate
from .neighbors import METRICS
from .report import FORMATS, write_univariate_report
from .rule import resolve_rule, select
from .sampling import (
    fuse,
    read_manifest,
    study_manifest,
    tier_slices,
    write_manifest,
)
from .scoring import ScorerClient, load_embeddings, load_scores, write_embeddings, write_scores
from .stats import (
    design_matrix,
    ks_by_variable,
    load_observations,
    ols,
    stepwise,
    write_observations,
)
from .study import load_losses, run_study, write_study_report
from .rule import per_sample_values

ENDPOINT_ENV = "INSTRUCTMINE_ENDPOINT"


class _Parser(argparse.ArgumentParser):
    """argparse that reports problems through the package's usage error."""

    def error(self, message):
        raise UsageError(message)


def _fresh_file(path: str) -> Path:
    out = Path(path)
    if out.exists():
        raise UsageError(f"output {out} already exists; outputs must go to fresh paths")
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True)
    return out


def _fresh_dir(path: str) -> Path:
    out = Path(path)
    if out.exists() and any(out.iterdir()):
        raise UsageError(f"output directory {out} is not empty; outputs must go to fresh paths")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(anchor: Path, command: str, args: argparse.Namespace) -> None:
    """Record the resolved run configuration beside the outputs."""
    options = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k != "handler" and v is not None
    }
    config = {"command": command, "version": __version__, "options": options}
    if anchor.is_dir():
        target = anchor / "config.json"
    else:
        target = anchor.with_name(anchor.name + ".config.json")
    target.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- command handlers ---------------------------------------------------------

def _cmd_ingest(args) -> None:
    out = _fresh_file(args.output)
    if args.source == "alpaca":
        corpus = ingest_alpaca(args.input, cap=args.cap, seed=args.seed)
    elif args.source == "open_assistant":
        corpus = ingest_open_assistant(args.input)
    elif args.source == "stack_exchange":
        corpus = ingest_stack_exchange(args.input)
    elif args.source == "wikihow":
        if not args.embeddings:
            raise UsageError("wikihow ingestion needs --embeddings for the title vectors")
        vectors = {k: v.vector for k, v in load_embeddings(args.embeddings).items()}
        corpus = ingest_wikihow(
            args.input,
            embeddings=vectors,
            clusters=args.clusters,
            target=args.cap,
            seed=args.seed,
        )
    elif args.source == "dolly":
        corpus = ingest_dolly(args.input)
    else:
        raise UsageError(f"unknown source {args.source!r}")
    write_store(corpus, out)
    _write_config(out, "ingest", args)
    print(f"ingested {len(corpus)} samples from {args.input} to {out}")


def _cmd_score(args) -> None:
    corpus = read_store(args.corpus)
    out = _fresh_file(args.out)
    emb_out = _fresh_file(args.embeddings_out) if args.embeddings_out else None
    if args.scores:
        score_map = load_scores(args.scores)
        missing = [i for i in corpus.ids() if i not in score_map]
        if missing:
            raise DataError(
                f"score sidecar covers {len(corpus) - len(missing)} of {len(corpus)} "
                f"samples; missing: {', '.join(missing[:10])}"
            )
        write_scores([score_map[i] for i in corpus.ids()], out)
        if emb_out is not None:
            raise UsageError("--embeddings-out needs --endpoint, not a score sidecar")
    else:
        endpoint = args.endpoint or os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            raise UsageError(
                f"pass --scores or --endpoint (or set {ENDPOINT_ENV})"
            )
        with ScorerClient(
            endpoint, batch=args.batch, parallelism=args.parallelism
        ) as client:
            score_map = client.fetch_scores(corpus.samples)
            write_scores([score_map[i] for i in corpus.ids()], out)
            if emb_out is not None:
                emb_map = client.fetch_embeddings(corpus.samples)
                write_embeddings([emb_map[i] for i in corpus.ids()], emb_out)
    _write_config(out, "score", args)
    print(f"scored {len(corpus)} samples to {out}")


def _cmd_indicators(args) -> None:
    corpus = read_store(args.corpus)
    scores = load_scores(args.scores)
    embeddings = load_embeddings(args.embeddings)
    out = _fresh_file(args.out)
    vector, per_sample = aggregate(
        corpus,
        scores,
        embeddings,
        knn=args.knn_i,
        knn_mode=args.knn_mode,
        metric=args.metric,
    )
    payload = {
        "corpus": corpus.name,
        "n": len(corpus),
        "dataset": vector.as_dict(),
        "per_sample": {
            "id": corpus.ids(),
            **{name: [float(v) for v in values] for name, values in per_sample.items()},
        },
    }
    _write_json(out, payload)
    _write_config(out, "indicators", args)
    print(f"indicators for {len(corpus)} samples written to {out}")


def _cmd_sample_fuse(args) -> None:
    manifest = read_manifest(args.manifest)
    out_dir = _fresh_dir(args.out_dir)
    corpora = {
        name: read_store(path, name=name)
        for name, path in manifest.corpus_paths.items()
    }
    for spec in manifest.specs:
        fused = fuse(spec, corpora)
        write_store(fused, out_dir / f"{spec.label}.jsonl")
    _write_config(out_dir, "sample-fuse", args)
    print(f"wrote {len(manifest.specs)} fused datasets to {out_dir}")


def _cmd_sample_tiers(args) -> None:
    corpus = read_store(args.corpus)
    indicator = args.indicator.lower()
    if indicator not in INDICATOR_NAMES:
        raise UsageError(f"unknown indicator {args.indicator!r}, have {INDICATOR_NAMES}")
    scores = load_scores(args.scores) if args.scores else {}
    embeddings = load_embeddings(args.embeddings) if args.embeddings else {}
    out_dir = _fresh_dir(args.out_dir)
    values = per_sample_values(corpus, scores, embeddings, needed=(indicator,))
    flat = {sid: v[indicator] for sid, v in values.items()}
    tiers = tier_slices(corpus, flat, k=args.k, size=args.size)
    for j, tier in enumerate(tiers, start=1):
        write_store(tier, out_dir / f"tier-{j:02d}.jsonl")
    _write_config(out_dir, "sample-tiers", args)
    print(f"wrote {len(tiers)} tiers by {indicator} to {out_dir}")


def _cmd_manifest(args) -> None:
    corpora = {}
    for item in args.corpus:
        if "=" not in item:
            raise UsageError(f"--corpus takes name=path, got {item!r}")
        name, path = item.split("=", 1)
        if name in corpora:
            raise UsageError(f"duplicate corpus name {name!r}")
        if not Path(path).exists():
            raise DataError(f"corpus store {path} does not exist")
        corpora[name] = path
    out = _fresh_file(args.out)
    manifest = study_manifest(
        corpora, fusions=args.fusions, size=args.size, seed=args.seed
    )
    write_manifest(manifest, out)
    _write_config(out, "manifest", args)
    print(f"wrote manifest with {len(manifest.specs)} fusion specs to {out}")


def _cmd_fit(args) -> None:
    observations = load_observations(args.observations)
    out = _fresh_file(args.out)
    y, X, names = design_matrix(observations)
    if args.stepwise:
        fit = stepwise(y, X, names, alpha_remove=args.alpha)
    else:
        fit = ols(y, X, names)
    _write_json(out, fit.summary_dict())
    _write_config(out, "fit", args)
    kept = [v for v in fit.variables if v != "intercept"]
    print(f"fit on {fit.n} observations, kept: {', '.join(kept) or 'intercept only'}")


def _cmd_ks(args) -> None:
    observations = load_observations(args.observations)
    out = _fresh_file(args.out)
    results = ks_by_variable(observations, reference=args.reference)
    payload = [
        {"variable": r.variable, "statistic": r.statistic, "p_value": r.p_value}
        for r in results
    ]
    _write_json(out, payload)
    _write_config(out, "ks", args)
    print(f"KS tests for {len(results)} variables written to {out}")


def _cmd_select(args) -> None:
    corpus = read_store(args.corpus)
    scores = load_scores(args.scores)
    embeddings = load_embeddings(args.embeddings)
    rule = resolve_rule(args.rule)
    out_dir = _fresh_dir(args.out_dir)
    if args.top is not None:
        report = select(
            rule, corpus, scores, embeddings,
            n=args.top, knn_mode=args.knn_mode, metric=args.metric,
        )
        write_store(report.corpus, out_dir / "selected.jsonl")
        summary = [{
            "dataset": "selected.jsonl",
            "n": len(report.corpus),
            "indicators": report.indicators.as_dict(),
            "rule_value": report.rule_value,
            "exp_rule_value": report.exp_rule_value,
        }]
    else:
        reports = select(
            rule, corpus, scores, embeddings,
            tiers=args.tiers, tier_size=args.tier_size,
            knn_mode=args.knn_mode, metric=args.metric,
        )
        summary = []
        for j, report in enumerate(reports, start=1):
            name = f"band-{j:02d}.jsonl"
            write_store(report.corpus, out_dir / name)
            summary.append({
                "dataset": name,
                "n": len(report.corpus),
                "indicators": report.indicators.as_dict(),
                "rule_value": report.rule_value,
                "exp_rule_value": report.exp_rule_value,
            })
    _write_json(out_dir / "selection.json", {"rule": rule.provenance, "datasets": summary})
    _write_config(out_dir, "select", args)
    print(f"selection under rule {rule.provenance} written to {out_dir}")


def _cmd_study(args) -> None:
    manifest = read_manifest(args.manifest)
    losses = load_losses(args.losses)
    scores = load_scores(args.scores)
    embeddings = load_embeddings(args.embeddings)
    out_dir = _fresh_dir(args.out_dir)
    result = run_study(
        manifest, losses, scores, embeddings,
        knn_mode=args.knn_mode, metric=args.metric, alpha=args.alpha,
    )
    write_study_report(result, out_dir / "report.json")
    write_observations(result.observations, out_dir / "observations.csv")
    _write_config(out_dir, "study", args)
    kept = [v for v in result.stepwise_fit.variables if v != "intercept"]
    print(
        f"study over {len(result.observations)} datasets: "
        f"stepwise kept {', '.join(kept) or 'intercept only'}"
    )


def _cmd_report(args) -> None:
    observations = load_observations(args.observations)
    formats = tuple(f.strip() for f in args.format.split(",") if f.strip())
    out_dir = _fresh_dir(args.out_dir)
    written = write_univariate_report(observations, out_dir, formats=formats)
    _write_config(out_dir, "report", args)
    print(f"wrote {len(written)} report files to {out_dir}")


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="instructmine", description=__doc__)
    parser.add_argument("--version", action="version", version=f"instructmine {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize a raw dataset")
    p.add_argument("--source", required=True,
                   choices=("alpaca", "open_assistant", "stack_exchange", "wikihow", "dolly"))
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--cap", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clusters", type=int, default=19)
    p.add_argument("--embeddings", help="embedding sidecar for wikihow titles")
    p.set_defaults(handler=_cmd_ingest)

    p = sub.add_parser("score", help="attach model scores to a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--scores", help="existing score sidecar (file backend)")
    p.add_argument("--endpoint", help=f"scorer service address (default ${ENDPOINT_ENV})")
    p.add_argument("--out", required=True)
    p.add_argument("--embeddings-out", dest="embeddings_out")
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--parallelism", type=int, default=4)
    p.set_defaults(handler=_cmd_score)

    p = sub.add_parser("indicators", help="compute the indicator set")
    p.add_argument("--corpus", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--knn-i", dest="knn_i", type=int, default=6)
    p.add_argument("--knn-mode", dest="knn_mode", default="exact",
                   choices=("exact", "approximate"))
    p.add_argument("--metric", default="cosine", choices=METRICS)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_indicators)

    p = sub.add_parser("sample", help="build subdatasets")
    sample_sub = p.add_subparsers(dest="sample_command", required=True)

    q = sample_sub.add_parser("fuse", help="fuse datasets per a manifest")
    q.add_argument("--manifest", required=True)
    q.add_argument("--out-dir", dest="out_dir", required=True)
    q.set_defaults(handler=_cmd_sample_fuse)

    q = sample_sub.add_parser("tiers", help="slice a pool by one indicator")
    q.add_argument("--corpus", required=True)
    q.add_argument("--indicator", required=True)
    q.add_argument("--k", type=int, default=8)
    q.add_argument("--size", type=int, default=2000)
    q.add_argument("--scores")
    q.add_argument("--embeddings")
    q.add_argument("--out-dir", dest="out_dir", required=True)
    q.set_defaults(handler=_cmd_sample_tiers)

    p = sub.add_parser("manifest", help="draw a fusion study manifest")
    p.add_argument("--corpus", action="append", required=True,
                   help="name=path of a candidate corpus store (repeatable)")
    p.add_argument("--fusions", type=int, default=78)
    p.add_argument("--size", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_manifest)

    p = sub.add_parser("fit", help="regress log-loss on the indicators")
    p.add_argument("--observations", required=True)
    p.add_argument("--stepwise", action="store_true")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("ks", help="distribution tests per variable")
    p.add_argument("--observations", required=True)
    p.add_argument("--reference", default="normal", choices=("normal", "uniform"))
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_ks)

    p = sub.add_parser("select", help="pick high-quality subsets")
    p.add_argument("--corpus", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--rule", default="builtin:eq4",
                   help='"builtin:eq4" or a fitted rule JSON path')
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--top", type=int)
    group.add_argument("--tiers", type=int)
    p.add_argument("--tier-size", dest="tier_size", type=int)
    p.add_argument("--knn-mode", dest="knn_mode", default="exact",
                   choices=("exact", "approximate"))
    p.add_argument("--metric", default="cosine", choices=METRICS)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(handler=_cmd_select)

    p = sub.add_parser("study",
                       help="fuse, measure, and fit in one deterministic run")
    p.add_argument("--manifest", required=True)
    p.add_argument("--losses", required=True, help="JSON map of dataset label to observed loss")
    p.add_argument("--scores", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--knn-mode", dest="knn_mode", default="exact",
                   choices=("exact", "approximate"))
    p.add_argument("--metric", default="cosine", choices=METRICS)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(handler=_cmd_study)

    p = sub.add_parser("report", help="plot-ready univariate reports")
    p.add_argument("--observations", required=True)
    p.add_argument("--format", default=",".join(FORMATS))
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(handler=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.handler(args)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except InstructMineError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
