"""Single entry point exposing the pipeline as subcommands.

Every run resolves its config (flag > env > config file > default), writes
its primary outputs without timestamps, and drops a ``manifest.json`` beside
them so the run can be reproduced byte for byte with a mock backend.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path

from . import annotation, assembler, evalharness, gateway as gw, names, records, synthesis
from .config import RunManifest, ToolConfig, config_hash, resolve_config, utc_now, write_manifest
from .errors import AlignmentError, QdsError
from .metrics import LexicalOverlapScorer, MetricConfig, RougeVariant
from .records import Dataset, Split

log = logging.getLogger("qds")


def _build_backend(spec: str | None, config: ToolConfig) -> gw.Gateway:
    if spec is None:
        spec = config.llm_endpoint
    if not spec:
        raise QdsError("no backend configured: pass --backend or set LLM_ENDPOINT")
    if spec.startswith("mock:"):
        backend = gw.load_mock_script(spec[len("mock:"):], strict_order=False)
    else:
        backend = gw.HttpBackend(spec, api_key=config.llm_api_key)
    return gw.Gateway(
        backend,
        retry_limit=config.retry_limit,
        backoff_base=config.backoff_base,
        max_in_flight=config.max_in_flight,
    )


def _build_scorer(spec: str | None, config: ToolConfig):
    if spec in (None, "lexical"):
        return LexicalOverlapScorer()
    return gw.HttpSimilarityScorer(spec, api_key=config.llm_api_key, baseline=config.similarity_baseline)


def _guard_outputs(inputs: list[str], outputs: list[str]) -> None:
    resolved_in = {Path(p).resolve() for p in inputs if p}
    for out in outputs:
        if out and Path(out).resolve() in resolved_in:
            raise QdsError(f"output path {out} would overwrite an input")


def _metric_config(args) -> MetricConfig:
    variant = RougeVariant.GOOGLE_ROUGE if args.variant == "google" else RougeVariant.PY_ROUGE
    return MetricConfig(variant=variant, use_stemmer=args.stemmer)


def _read_text_records(path: str) -> dict[str, str]:
    rows = records.load_records(path, lambda d: (str(d["item_id"]), str(d["text"])))
    return dict(rows)


def _finish(manifest: RunManifest, out_dir: str | Path) -> None:
    manifest.finished_at = utc_now()
    write_manifest(manifest, out_dir)


def cmd_ingest(args, config: ToolConfig) -> int:
    _guard_outputs([args.input], [args.out])
    manifest = RunManifest(
        subcommand="ingest",
        config_hash=config_hash(config),
        seed=config.seed,
        inputs=[args.input],
        outputs=[args.out],
        started_at=utc_now(),
    )
    pairs = records.load_pairs(args.input, Dataset(args.dataset), Split(args.split))
    if args.normalize_dialogsum:
        gateway = _build_backend(args.backend, config)
        forbidden = names.load_forbidden_names(args.forbidden)
        male, female = names.load_name_pools()
        normalized = []
        for pair in pairs:
            pool = names.sample_candidate_pool(pair.id, config.seed, male, female)
            normalized.append(
                names.normalize_dialogsum_speakers(
                    pair, gateway, pool, forbidden, config.template_overrides
                )
            )
        pairs = normalized
    count = records.write_records(pairs, args.out)
    log.info("ingested %d pairs -> %s", count, args.out)
    print(f"pairs: {count}")
    _finish(manifest, Path(args.out).parent)
    return 0


def cmd_synthesize(args, config: ToolConfig) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [str(out_dir / n) for n in ("triples.jsonl", "rejects.jsonl", "stats.json")]
    _guard_outputs([args.pairs], outputs)
    manifest = RunManifest(
        subcommand="synthesize",
        config_hash=config_hash(config),
        seed=config.seed,
        inputs=[args.pairs],
        outputs=outputs,
        started_at=utc_now(),
    )
    pairs = records.load_pairs_auto(args.pairs)
    gateway = _build_backend(args.backend, config)
    scorer = _build_scorer(args.scorer, config)
    result = synthesis.synthesize(
        pairs,
        gateway,
        scorer,
        threshold=args.threshold if args.threshold is not None else config.similarity_threshold,
        failure_cap=config.failure_cap,
        workers=config.workers,
        template_overrides=config.template_overrides,
    )
    records.write_records(result.triples, out_dir / "triples.jsonl")
    records.write_records(result.rejects, out_dir / "rejects.jsonl")
    with open(out_dir / "stats.json", "w", encoding="utf-8") as fh:
        json.dump(result.stats.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"triples: {result.stats.triples_out} "
        f"(text-dropped {result.stats.dropped_text}, "
        f"semantic-dropped {result.stats.dropped_semantic})"
    )
    _finish(manifest, out_dir)
    return 0


def cmd_assemble(args, config: ToolConfig) -> int:
    with open(args.recipe, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else spec.get("seed", config.seed)

    pairs_by_dataset: dict[Dataset, list] = {}
    triples_by_dataset: dict[Dataset, list] = {}
    include_base = set()
    inputs = [args.recipe]
    for name, entry in spec.get("datasets", {}).items():
        dataset = Dataset(name)
        if entry.get("pairs"):
            pairs_by_dataset[dataset] = records.load_pairs_auto(entry["pairs"])
            inputs.append(entry["pairs"])
            if entry.get("include_base", True):
                include_base.add(dataset)
        if entry.get("triples"):
            triples_by_dataset[dataset] = synthesis.load_triples(entry["triples"])
            inputs.append(entry["triples"])

    recipe = assembler.MixRecipe(
        include_base=frozenset(include_base),
        triples_sample_size=int(spec.get("triples_sample_size", 5000)),
        augment_factor=int(spec.get("augment_factor", 1)),
        seed=int(seed),
        general_instruction=config.general_instruction,
        query_instruction_format=config.query_instruction_format,
    )
    outputs = [str(out_dir / "samples.jsonl"), str(out_dir / "report.json")]
    _guard_outputs(inputs, outputs)
    manifest = RunManifest(
        subcommand="assemble",
        config_hash=config_hash(config),
        seed=recipe.seed,
        inputs=inputs,
        outputs=outputs,
        started_at=utc_now(),
    )
    samples, report = assembler.assemble(pairs_by_dataset, triples_by_dataset, recipe)
    records.write_records(samples, out_dir / "samples.jsonl")
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"samples: {report.total}")
    _finish(manifest, out_dir)
    return 0


def cmd_score(args, config: ToolConfig) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = [m.strip() for m in args.metric.split(",") if m.strip()]
    candidates = _read_text_records(args.candidates)
    references = _read_text_records(args.references)
    manifest = RunManifest(
        subcommand="score",
        config_hash=config_hash(config),
        seed=config.seed,
        inputs=[args.candidates, args.references],
        outputs=[str(out_dir / "scores.jsonl"), str(out_dir / "aggregate.json")],
        started_at=utc_now(),
    )
    rows, aggregates = evalharness.eval_summaries(
        candidates, references, metrics=metrics, config=_metric_config(args)
    )
    records.write_records(rows, out_dir / "scores.jsonl")
    with open(out_dir / "aggregate.json", "w", encoding="utf-8") as fh:
        json.dump({m: s.to_dict() for m, s in aggregates.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for metric, score in aggregates.items():
        print(f"{metric}: f1={score.f1:.4f} p={score.precision:.4f} r={score.recall:.4f}")
    _finish(manifest, out_dir)
    return 0


def cmd_eval(args, config: ToolConfig) -> int:
    if args.task == "summaries":
        return cmd_score(args, config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    gateway = _build_backend(args.backend, config)
    if args.task == "dream":
        items = records.load_dream_items(args.items)
        scorer = _build_scorer(args.scorer, config)
        manifest = RunManifest(
            subcommand="eval dream",
            config_hash=config_hash(config),
            seed=config.seed,
            inputs=[args.items],
            outputs=[str(out_dir / "choices.jsonl"), str(out_dir / "report.json")],
            started_at=utc_now(),
        )
        result = evalharness.eval_dream(items, gateway, scorer)
        records.write_records(result.results, out_dir / "choices.jsonl")
        report = {
            "accuracy": result.accuracy,
            "n_items": len(items),
            "skipped": result.skipped,
            "scorer": scorer.backend_id,
        }
        with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"accuracy: {result.accuracy:.4f} (skipped {result.skipped})")
        _finish(manifest, out_dir)
        return 0
    if args.task == "judge":
        rows = records.load_records(args.items, lambda d: d)
        if args.sample and args.sample < len(rows):
            rng = random.Random(config.seed)
            rows = rng.sample(rows, args.sample)
        manifest = RunManifest(
            subcommand="eval judge",
            config_hash=config_hash(config),
            seed=config.seed,
            inputs=[args.items],
            outputs=[str(out_dir / "verdicts.jsonl"), str(out_dir / "report.json")],
            started_at=utc_now(),
        )
        verdicts = [
            evalharness.judge_evaluate(
                str(row.get("dialogue", "")),
                str(row["summary"]),
                gateway,
                item_id=str(row.get("item_id", i)),
                template_overrides=config.template_overrides,
            )
            for i, row in enumerate(rows)
        ]
        records.write_records(verdicts, out_dir / "verdicts.jsonl")
        report = {"n_items": len(verdicts), "dimensions": evalharness.aggregate_verdicts(verdicts)}
        with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for dim, stats in report["dimensions"].items():
            print(f"{dim}: mean={stats['mean']:.2f} std={stats['std']:.2f}")
        _finish(manifest, out_dir)
        return 0
    raise QdsError(f"unknown eval task: {args.task}")


def cmd_stats(args, config: ToolConfig) -> int:
    printed = False
    if args.pairs:
        pairs = records.load_pairs_auto(args.pairs)
        by_split: dict[Split, int] = {}
        for p in pairs:
            by_split[p.split] = by_split.get(p.split, 0) + 1
        dataset = pairs[0].dataset if pairs else Dataset.SAMSUM
        stats = records.CorpusStats(dataset=dataset, counts=by_split)
        for split, n in sorted(by_split.items(), key=lambda kv: kv[0].value):
            print(f"{dataset.value} {split.value}: {n}")
        if args.out:
            records.write_records([stats], args.out)
        printed = True
    if args.triples:
        n = records.count_records(args.triples)
        print(f"triple_count: {n}")
        printed = True
    if args.dream:
        n = len(records.load_dream_items(args.dream))
        print(f"dream items: {n}")
        printed = True
    if not printed:
        raise QdsError("nothing to count: pass --pairs, --triples, or --dream")
    if args.out:
        manifest = RunManifest(
            subcommand="stats",
            config_hash=config_hash(config),
            seed=config.seed,
            inputs=[p for p in (args.pairs, args.triples, args.dream) if p],
            outputs=[args.out],
            started_at=utc_now(),
        )
        _finish(manifest, Path(args.out).parent)
    return 0


def cmd_annotate_serve(args, config: ToolConfig) -> int:
    tasks: list[annotation.AnnotationTask] = []
    system_by_task: dict[str, str] = {}
    inputs = []
    if args.triples:
        triples = synthesis.load_triples(args.triples)
        dialogues = {}
        if args.pairs:
            dialogues = {p.id: p.dialogue_text for p in records.load_pairs_auto(args.pairs)}
            inputs.append(args.pairs)
        tasks.extend(annotation.quality_tasks_from_triples(triples, dialogues))
        inputs.append(args.triples)
    if args.likert:
        rows = annotation.load_likert_rows(args.likert)
        likert_tasks, system_by_task = annotation.likert_tasks_from_records(rows)
        tasks.extend(likert_tasks)
        inputs.append(args.likert)
    if not tasks:
        raise QdsError("no tasks: pass --triples and/or --likert")

    store = annotation.LabelStore(args.labels)
    service = annotation.AnnotationService(tasks, store, system_by_task)
    server = annotation.AnnotationServer(
        service, port=args.port, host=args.host, token=args.token, static_dir=args.static
    )
    manifest = RunManifest(
        subcommand="annotate-serve",
        config_hash=config_hash(config),
        seed=config.seed,
        inputs=inputs,
        outputs=[args.labels],
        started_at=utc_now(),
    )
    write_manifest(manifest, Path(args.labels).resolve().parent)
    print(
        f"serving {len(tasks)} tasks on http://{args.host}:{server.port} (labels -> {args.labels})",
        flush=True,
    )
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qds",
        description="Synthesize query-dialogue-summary triples, assemble instruction corpora, "
        "and evaluate dialogue summarization.",
    )
    parser.add_argument("--config", help="JSON config file", default=None)
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load, validate, and persist a corpus file")
    p.add_argument("--input", required=True)
    p.add_argument("--dataset", required=True, choices=[d.value for d in Dataset])
    p.add_argument("--split", required=True, choices=[s.value for s in Split])
    p.add_argument("--out", required=True)
    p.add_argument("--normalize-dialogsum", action="store_true")
    p.add_argument("--backend", default=None, help="URL or mock:script.json")
    p.add_argument("--forbidden", default=None, help="forbidden-names config file")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("synthesize", help="generate filtered query-dialogue-summary triples")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--backend", default=None, help="URL or mock:script.json")
    p.add_argument("--scorer", default=None, help="'lexical' or a similarity endpoint URL")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("assemble", help="build the mixed instruction-tuning corpus")
    p.add_argument("--recipe", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("score", help="score candidate summaries against references")
    _add_score_args(p)

    p = sub.add_parser("eval", help="evaluation harness")
    eval_sub = p.add_subparsers(dest="task", required=True)
    ps = eval_sub.add_parser("summaries")
    _add_score_args(ps)
    pd = eval_sub.add_parser("dream")
    pd.add_argument("--items", required=True)
    pd.add_argument("--backend", default=None)
    pd.add_argument("--scorer", default=None)
    pd.add_argument("--out", required=True)
    pj = eval_sub.add_parser("judge")
    _add_judge_args(pj)

    p = sub.add_parser("judge", help="rate summaries with a judge backend")
    _add_judge_args(p)
    p.set_defaults(task="judge")

    p = sub.add_parser("stats", help="count records in corpus files")
    p.add_argument("--pairs", default=None)
    p.add_argument("--triples", default=None)
    p.add_argument("--dream", default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("annotate-serve", help="serve the annotation UI and API")
    p.add_argument("--port", type=int, default=8400)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--triples", default=None)
    p.add_argument("--pairs", default=None)
    p.add_argument("--likert", default=None, help="Likert items file")
    p.add_argument("--labels", required=True, help="append-only label log")
    p.add_argument("--token", default=None, help="shared auth token for /api/*")
    p.add_argument("--static", default=None, help="static UI directory")
    return parser


def _add_score_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--metric", default="r1,r2,rl")
    p.add_argument("--variant", choices=["google", "py"], default="google")
    p.add_argument("--stemmer", action="store_true")
    p.add_argument("--out", required=True)


def _add_judge_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--items", required=True, help="records with item_id, dialogue, summary")
    p.add_argument("--backend", default=None)
    p.add_argument("--sample", type=int, default=None)
    p.add_argument("--out", required=True)


COMMANDS = {
    "ingest": cmd_ingest,
    "synthesize": cmd_synthesize,
    "assemble": cmd_assemble,
    "score": cmd_score,
    "eval": cmd_eval,
    "judge": cmd_eval,
    "stats": cmd_stats,
    "annotate-serve": cmd_annotate_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    overrides = {"seed": getattr(args, "seed", None)}
    try:
        config = resolve_config(args.config, overrides=overrides)
        return COMMANDS[args.command](args, config)
    except AlignmentError as exc:
        log.error("alignment error: %s", exc)
        return 1
    except QdsError as exc:
        log.error("%s", exc)
        return 1
    except OSError as exc:
        log.error("i/o error: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
