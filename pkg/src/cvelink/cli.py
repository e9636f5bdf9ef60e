"""Command-line entry points.

Subcommands mirror the pipeline stages:

    ingest     parse catalogs, build the attack-to-CVE mapping
    embed      embed a CVE corpus into the cache and write the index
    predict    rank CVEs for one text or report file
    calibrate  sweep thresholds over labeled pairs, report the best
    evaluate   run the validation methods over a report set
    serve      expose POST /predict over HTTP

Settings resolve in precedence order: command-line flag, then
environment (CVELINK_EMBED_URL for the remote service address), then a
JSON config file given with --config, then built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass

from . import calibrate as cal
from . import corpus, lineio, news, validate
from .embedder import (
    Backend,
    embed,
    embed_corpus,
    load_cached_vectors,
    make_backend,
)
from .errors import CvelinkError, InputError
from .index import (
    VectorIndex,
    apply_threshold,
    load_index,
    rank_top_k,
    save_index,
)
from .service import make_server
from .textprep import normalize

log = logging.getLogger(__name__)

DEFAULT_K = 20
DEFAULT_RHO = 0.58

ENV_VARS = {"embed_url": "CVELINK_EMBED_URL"}

_DEFAULTS = {
    "backend": "deterministic",
    "model_dir": None,
    "embed_url": None,
    "k": DEFAULT_K,
    "rho": DEFAULT_RHO,
    "scale": "unit",
    "seed": 0,
}


@dataclass
class RunConfig:
    backend: str = "deterministic"
    model_dir: str | None = None
    embed_url: str | None = None
    k: int = DEFAULT_K
    rho: float = DEFAULT_RHO
    scale: str = "unit"
    seed: int = 0

    def make_backend(self) -> Backend:
        return make_backend(
            self.backend, seed=self.seed, url=self.embed_url, model_dir=self.model_dir
        )


def _coerce(name: str, value, default):
    try:
        if isinstance(default, bool):
            raise TypeError(name)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError):
        raise InputError(f"setting {name!r} has unusable value {value!r}") from None
    return value


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Apply the flag > environment > config file > default chain."""
    from_file: dict = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                from_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(from_file, dict):
            raise InputError(f"{config_path}: config must be a JSON object")
        unknown = set(from_file) - set(_DEFAULTS)
        if unknown:
            raise InputError(f"{config_path}: unknown settings {sorted(unknown)}")

    resolved = {}
    for name, default in _DEFAULTS.items():
        value = getattr(args, name, None)
        if value is None:
            env_name = ENV_VARS.get(name)
            if env_name and os.environ.get(env_name):
                value = os.environ[env_name]
            elif name in from_file:
                value = from_file[name]
        if value is None:
            value = default
        resolved[name] = value if value is None else _coerce(name, value, default)

    cfg = RunConfig(**resolved)
    if cfg.k < 1:
        raise InputError(f"k must be >= 1, got {cfg.k}")
    if not 0.0 <= cfg.rho <= 1.0:
        raise InputError(f"rho must be within [0, 1], got {cfg.rho}")
    if cfg.scale not in ("unit", "percent"):
        raise InputError(f"scale must be 'unit' or 'percent', got {cfg.scale!r}")
    return cfg


def _format_score(score: float, scale: str) -> str:
    if scale == "percent":
        return f"{100.0 * score:.4f}"
    return f"{score:.6f}"


def _prediction_table(ranked, kept_ids: set[str], scale: str) -> str:
    lines = [f"{'rank':>4}  {'cve_id':<18}  {'score':>10}  kept"]
    for rank, pred in enumerate(ranked, start=1):
        flag = "yes" if pred.cve_id in kept_ids else "no"
        lines.append(
            f"{rank:>4}  {pred.cve_id:<18}  {_format_score(pred.score, scale):>10}  {flag}"
        )
    return "\n".join(lines)


def cmd_ingest(args: argparse.Namespace) -> int:
    attacks, a_skip = corpus.parse_attack_catalog(args.attacks)
    weaknesses, w_skip = corpus.parse_weakness_catalog(args.weaknesses)
    cves, c_skip = corpus.parse_cve_records(args.corpus)
    mapping, dangling = corpus.build_mapping(
        attacks, weaknesses, cves, include_unlinked=args.include_unlinked
    )
    stats = corpus.mapping_stats(mapping, attacks)

    os.makedirs(args.out, exist_ok=True)
    mapping_path = os.path.join(args.out, "mapping.jsonl")
    stats_path = os.path.join(args.out, "stats.csv")
    dangling_path = os.path.join(args.out, "dangling.jsonl")
    corpus.save_mapping(mapping, mapping_path)
    corpus.write_stats_csv(stats, stats_path)
    corpus.save_dangling(dangling, dangling_path)

    print(f"attack entries: {len(attacks)} (skipped {a_skip})")
    print(f"weakness records: {len(weaknesses)} (skipped {w_skip})")
    print(f"vulnerability records: {len(cves)} (skipped {c_skip})")
    for layer in corpus.Layer:
        s = stats[layer]
        print(f"  {layer.value}: {s.linked} of {s.total} linked")
    print(f"dangling links: {len(dangling)}")
    print(f"wrote {mapping_path}, {stats_path}, {dangling_path}")

    if args.pairs_out:
        cfg = resolve_config(args)
        pairs = corpus.make_pair_dataset(
            mapping, attacks, cves,
            negatives_per_positive=args.negatives, seed=cfg.seed,
        )
        corpus.save_pairs(pairs, args.pairs_out)
        positives = sum(1 for p in pairs if p.positive)
        print(f"wrote {len(pairs)} pairs ({positives} positive) to {args.pairs_out}")
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    cves, skipped = corpus.parse_cve_records(args.corpus)
    backend = cfg.make_backend()
    report = embed_corpus(backend, cves, args.cache)
    print(f"embedded {report.embedded}, reused {report.reused}, "
          f"failed {len(report.failed)}, truncated {len(report.truncated)}")
    if skipped:
        print(f"(skipped {skipped} malformed corpus lines)")
    for rid, reason in report.failed:
        print(f"failed {rid}: {reason}", file=sys.stderr)
    ids, vectors = load_cached_vectors(args.cache, cves)
    idx = VectorIndex(ids, vectors)
    save_index(idx, args.index)
    print(f"index: {len(idx)} vectors -> {args.index}")
    return 0


def _query_text(args: argparse.Namespace) -> str:
    if getattr(args, "text", None):
        return args.text
    path = getattr(args, "report", None)
    if not path:
        raise InputError("give --text or --report")
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read()
    report = news.parse_report(raw, os.path.basename(path))
    return report.text


def cmd_predict(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    idx = load_index(args.index)
    backend = cfg.make_backend()
    cleaned = normalize(_query_text(args))
    query = embed(backend, cleaned)
    ranked = rank_top_k(query, idx, cfg.k)
    kept = apply_threshold(ranked, cfg.rho)
    table = _prediction_table(ranked, {p.cve_id for p in kept}, cfg.scale)
    print(table)
    print(f"{len(kept)} of {len(ranked)} at or above rho={cfg.rho:g}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table + "\n")
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    pairs = corpus.load_pairs(args.pairs)
    if not pairs:
        raise InputError(f"{args.pairs}: pair set is empty; nothing to calibrate")
    backend = cfg.make_backend()
    scored = cal.score_pairs(backend, pairs)
    curve = cal.pr_curve(scored)
    eer_rho = cal.find_eer(curve)

    if args.index:
        idx = load_index(args.index)
    else:
        # Build a sweep index from the pair set itself.
        by_id = {}
        for p in pairs:
            by_id.setdefault(p.cve_id, p.cve_text)
        ids = sorted(by_id)
        vectors = backend.encode([normalize(by_id[i]) for i in ids])
        idx = VectorIndex(ids, vectors)

    truth: dict[str, set[str]] = {}
    attack_text: dict[str, str] = {}
    for p in pairs:
        attack_text.setdefault(p.attack_id, p.attack_text)
        if p.positive:
            truth.setdefault(p.attack_id, set()).add(p.cve_id)
    attack_ids = sorted(attack_text)
    queries = backend.encode([normalize(attack_text[a]) for a in attack_ids])
    cases = [(queries[i], truth.get(a, set())) for i, a in enumerate(attack_ids)]

    k_values = tuple(int(x) for x in args.k_values.split(","))
    rows = cal.k_sensitivity(cases, idx, k_values=k_values, rho=cfg.rho)

    os.makedirs(args.out, exist_ok=True)
    curve_path = os.path.join(args.out, "pr_curve.csv")
    k_path = os.path.join(args.out, "k_sensitivity.csv")
    cal.write_pr_curve_csv(curve, curve_path)
    cal.write_k_sensitivity_csv(rows, k_path)

    at_eer = next(pt for pt in curve if pt.rho == eer_rho)
    print(f"eer_rho={eer_rho:.2f}")
    print(f"precision={at_eer.precision:.4f} recall={at_eer.recall:.4f} "
          f"f1={at_eer.f1:.4f} at rho={eer_rho:.2f}")
    print(f"wrote {curve_path}, {k_path}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    idx = load_index(args.index)
    backend = cfg.make_backend()
    cves, _ = corpus.parse_cve_records(args.corpus)
    reports = news.load_reports(args.reports)
    os.makedirs(args.out, exist_ok=True)
    outcomes_path = os.path.join(args.out, "outcomes.csv")
    exact_path = os.path.join(args.out, "exact_match.csv")
    preds_path = os.path.join(args.out, "predictions.jsonl")

    if not reports:
        validate.write_outcomes_csv([], outcomes_path)
        with open(exact_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("matched,unseen_only,no_mentions\n")
        print("no reports in manifest; wrote empty outputs")
        return 0

    texts = [normalize(r.text) for r in reports]
    queries = backend.encode(texts)
    predictions = {
        r.report_id: rank_top_k(queries[i], idx, cfg.k)
        for i, r in enumerate(reports)
    }

    outcomes = []
    if args.labels:
        labels = validate.load_labels(args.labels)
        outcomes.append(validate.evaluate_m1(predictions, labels))
    else:
        print("no label file given; skipping manual-annotation method")
    outcomes.append(validate.evaluate_m2(predictions, cfg.rho))
    outcomes.append(validate.evaluate_m3(predictions, reports, cves, backend, cfg.rho))
    outcomes.append(validate.evaluate_m4(predictions, reports, cves, backend, cfg.rho))
    exact = validate.exact_match_rate(predictions, reports)

    validate.write_outcomes_csv(outcomes, outcomes_path)
    with open(exact_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("matched,unseen_only,no_mentions\n")
        fh.write(f"{exact.matched},{exact.unseen_only},{exact.no_mentions}\n")
    lineio.write_rows(
        preds_path, "predictions",
        (
            {
                "report_id": rid,
                "mentioned": next(
                    r.mentioned_cves for r in reports if r.report_id == rid
                ),
                "predictions": [
                    {"cve_id": p.cve_id, "score": round(p.score, 6)}
                    for p in predictions[rid]
                ],
            }
            for rid in sorted(predictions)
        ),
    )

    for out in outcomes:
        print(f"{out.method}: {out.relevant}/{out.evaluated} relevant "
              f"({100.0 * out.relevant_share:.1f}%)")
    print(f"exact match: {exact.matched} matched, {exact.unseen_only} unseen-only, "
          f"{exact.no_mentions} without mentions")
    print(f"wrote {outcomes_path}, {exact_path}, {preds_path}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    idx = load_index(args.index)
    backend = cfg.make_backend()
    server = make_server(idx, backend, cfg.k, cfg.rho, host=args.host, port=args.port)
    print(f"serving {len(idx)} vectors on http://{args.host}:{server.server_address[1]}/predict")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default settings")
    common.add_argument("--backend", choices=["deterministic", "remote", "portable"])
    common.add_argument("--model-dir", dest="model_dir", help="portable model directory")
    common.add_argument("--embed-url", dest="embed_url", help="remote embedding service url")
    common.add_argument("--k", type=int, help=f"ranking depth (default {DEFAULT_K})")
    common.add_argument("--rho", type=float, help=f"score threshold (default {DEFAULT_RHO})")
    common.add_argument("--seed", type=int, help="deterministic backend seed")
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="cvelink",
        description="Link attack and news text to CVE records by embedding similarity.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="build the attack-to-CVE mapping")
    p.add_argument("--attacks", required=True)
    p.add_argument("--weaknesses", required=True)
    p.add_argument("--corpus", required=True, help="CVE corpus file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--include-unlinked", action="store_true")
    p.add_argument("--pairs-out", dest="pairs_out", help="also write a labeled pair set")
    p.add_argument("--negatives", type=int, default=1, help="negatives per positive")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("embed", parents=[common], help="embed a corpus, write the index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--cache", required=True, help="embedding cache file")
    p.add_argument("--index", required=True, help="index file to write")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("predict", parents=[common], help="rank CVEs for a text")
    p.add_argument("--index", required=True)
    p.add_argument("--text", help="query text")
    p.add_argument("--report", help="report file (title, blank line, body)")
    p.add_argument("--scale", choices=["unit", "percent"])
    p.add_argument("--out", help="also write the table to this file")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("calibrate", parents=[common], help="sweep thresholds on pairs")
    p.add_argument("--pairs", required=True, help="labeled pair file")
    p.add_argument("--index", help="index for the top-k sweep (else built from pairs)")
    p.add_argument("--k-values", dest="k_values", default="1,5,10,20,50")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", parents=[common], help="validate predictions on reports")
    p.add_argument("--index", required=True)
    p.add_argument("--corpus", required=True, help="CVE corpus file")
    p.add_argument("--reports", required=True, help="report manifest")
    p.add_argument("--labels", help="manual annotation CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", parents=[common], help="HTTP prediction service")
    p.add_argument("--index", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CvelinkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
