"""Command-line entry points for every subsystem.

Usage sketch:

    caplab annotate plan --dataset data/ --job-dir jobs/j1 --task-id recap --mode recaption
    caplab annotate run --job-dir jobs/j1 --workers 4 --endpoint http://host:8301
    caplab annotate finalize --job-dir jobs/j1
    caplab stats --dataset data/manifest.json --subset 10000 --seed 7 --out report.json
    caplab eval anls --pred preds.jsonl --ref refs.jsonl
    caplab eval gsb --judgments judgments.jsonl --gold gold.json
    caplab mix compose --mixture mix.json --k 2000000 --oracle-cmd './train_eval.sh'
    caplab scaling fit --points points.jsonl --out fit.json --csv curve.csv
    caplab pack bench --capacity 4096 --dist lognormal:5,1 --n 10000 --seed 1
    caplab evalsvc serve --port 8302 --data evaldata/
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import annotate as ann
from . import corpus, mixture, packing, quality, scaling, textstats
from .evalsvc import EvalService, TaskPair
from .evalsvc import server as evalsvc_server
from .quality import GsbJudgment, QualityDimensions


def _load_manifest_arg(dataset: str) -> tuple[corpus.DatasetManifest, Path]:
    """Accept either a manifest path or a shard directory."""
    path = Path(dataset)
    if path.is_dir():
        manifest = corpus.build_manifest(path)
        return manifest, path
    return corpus.load_manifest(path), path.parent


# -- annotate ----------------------------------------------------------------


def cmd_annotate_plan(args) -> int:
    manifest, root = _load_manifest_arg(args.dataset)
    task = ann.TaskSpec(
        task_id=args.task_id,
        dataset_id=manifest.dataset_id,
        mode=args.mode,
        prompt_template_id=args.template,
        max_retries=args.max_retries,
        rate_limit=args.rate_limit,
    )
    coordinator = ann.Coordinator.create(args.job_dir, manifest, root, task, job_id=args.job)
    plan = coordinator.plan()
    print(f"planned job {plan.job_id}: {len(plan.pending_shards)} shards pending")
    coordinator.close()
    return 0


def _client_factory(args):
    if args.mock:
        def factory(worker_id: str):
            return ann.MockCaptionerClient(latency=args.mock_latency)
    else:
        if not args.endpoint:
            raise SystemExit("either --endpoint or --mock is required")

        def factory(worker_id: str):
            return ann.HttpCaptionerClient(args.endpoint, args.model_id, timeout=args.timeout)
    return factory


def cmd_annotate_run(args) -> int:
    coordinator = ann.run_job(
        args.job_dir,
        _client_factory(args),
        workers=args.workers,
        lease_duration=args.lease_duration,
        flush_interval=args.flush_interval,
    )
    plan = coordinator.plan()
    print(f"job {plan.job_id}: {len(plan.completed_shards)} shards done")
    coordinator.close()
    return 0


def cmd_annotate_finalize(args) -> int:
    manifest = ann.finalize(args.job_dir)
    out = Path(args.job_dir) / "out" / corpus.MANIFEST_FILENAME
    print(f"finalized {manifest.dataset_id}: {manifest.total_samples} records -> {out}")
    return 0


def cmd_annotate_mock_server(args) -> int:
    from .annotate.mockserver import serve_mock_captioner

    serve_mock_captioner(args.port, args.latency)
    return 0


# -- stats ---------------------------------------------------------------------


def cmd_stats(args) -> int:
    manifest, root = _load_manifest_arg(args.dataset)
    subset = None if args.subset in (None, 0) else args.subset
    report = textstats.corpus_stats(
        manifest, root, subset_size=subset, seed=args.seed, language=args.language
    )
    payload = json.dumps(report.to_json_obj(), indent=2)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(payload)
    return 0


# -- eval ------------------------------------------------------------------------


def _read_texts(path: str, field: str) -> list[str]:
    texts = []
    for obj in corpus.iter_jsonl(path):
        if field not in obj:
            raise SystemExit(f"{path}: record missing field {field!r}")
        texts.append(obj[field])
    return texts


def cmd_eval_anls(args) -> int:
    preds = _read_texts(args.pred, args.field)
    refs = _read_texts(args.ref, args.field)
    score = quality.ocr_benchmark_score(preds, refs, tau=args.tau)
    print(json.dumps({"mean": score.mean, "tau": score.tau, "n": len(score.per_sample)}))
    return 0


def cmd_eval_judge(args) -> int:
    candidates = _read_texts(args.candidates, args.field)
    refs = [[t] for t in _read_texts(args.refs, args.field)]
    judge = quality.HttpJudgeClient(args.endpoint, args.model_id)
    scores = quality.judge_captions_batch(
        candidates, refs, judge, max_workers=args.workers, rate_limit=args.rate_limit
    )
    mean = sum(s.rescaled for s in scores) / len(scores)
    print(json.dumps({"mean_rescaled": mean, "n": len(scores)}))
    return 0


def cmd_eval_gsb(args) -> int:
    judgments = [
        GsbJudgment(
            pair_id=o["pair_id"],
            rater_id=o.get("rater_id", ""),
            score_a=o.get("score_a", 3),
            score_b=o.get("score_b", 3),
            verdict=o["verdict"],
            presented_order=o.get("presented_order", "AB"),
        )
        for o in corpus.iter_jsonl(args.judgments)
    ]
    report = quality.gsb_aggregate(judgments)
    out = {
        "win_rate": report.win_rate,
        "tie_rate": report.tie_rate,
        "loss_rate": report.loss_rate,
        "win_plus_tie": report.win_plus_tie,
        "total": report.total,
    }
    if args.gold:
        gold = json.loads(Path(args.gold).read_text(encoding="utf-8"))
        check = quality.gold_accuracy(judgments, gold, threshold=args.threshold)
        out["gold"] = {"accuracy": check.accuracy, "passed": check.passed}
    print(json.dumps(out))
    return 0


# -- mix ---------------------------------------------------------------------------


def _load_mixture(path: str) -> mixture.MixtureSpec:
    return mixture.mixture_from_json_obj(json.loads(Path(path).read_text(encoding="utf-8")))


def _oracle_from_args(args) -> mixture.EvalOracle:
    if not args.oracle_cmd:
        raise SystemExit("--oracle-cmd is required")
    return mixture.CommandOracle(args.oracle_cmd)


def cmd_mix_subset(args) -> int:
    manifest, root = _load_manifest_arg(args.dataset)
    subset = mixture.stratified_subset(
        manifest, root, k=args.k, strata_key=args.strata_key, seed=args.seed, out_dir=args.out
    )
    corpus.save_manifest(subset, Path(args.out) / corpus.MANIFEST_FILENAME)
    print(f"wrote {subset.total_samples} samples across {len(subset.shards)} shards to {args.out}")
    return 0


def cmd_mix_quickeval(args) -> int:
    spec = _load_mixture(args.mixture)
    score = mixture.quick_quality_eval(spec, args.k, _oracle_from_args(args))
    print(json.dumps({"score": score, "k": args.k}))
    return 0


def cmd_mix_compose(args) -> int:
    spec = _load_mixture(args.mixture)
    result, trail = mixture.composition_search(
        spec, _oracle_from_args(args), args.k, max_passes=args.max_passes
    )
    payload = {
        "mixture": result.to_json_obj(),
        "trail": [t.to_json_obj() for t in trail],
    }
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(json.dumps(payload, indent=2))
    return 0


def cmd_mix_incremental(args) -> int:
    spec = _load_mixture(args.mixture)
    decision = mixture.incremental_eval(
        spec, args.new_dataset, args.group, _oracle_from_args(args), args.k, epsilon=args.epsilon
    )
    print(json.dumps(decision.to_json_obj()))
    return 0


def cmd_mix_plan(args) -> int:
    obj = json.loads(Path(args.stages).read_text(encoding="utf-8"))
    stages = [
        mixture.CurriculumStage(
            name=s["name"],
            mixture=mixture.mixture_from_json_obj(s["mixture"]),
            quality=QualityDimensions(**s["quality"]),
            budget=s["budget"],
        )
        for s in obj["stages"]
    ]
    plan = mixture.curriculum_plan(stages)
    print(f"valid curriculum: {' -> '.join(s.name for s in plan.stages)}")
    return 0


def cmd_mix_rankcheck(args) -> int:
    raw = json.loads(Path(args.scores).read_text(encoding="utf-8"))
    scores = {d: {float(k): v for k, v in sizes.items()} for d, sizes in raw.items()}
    report = mixture.rank_consistency(scores)
    print(json.dumps(report.to_json_obj()))
    return 0


# -- scaling -------------------------------------------------------------------------


def cmd_scaling_fit(args) -> int:
    points = [
        scaling.ScorePoint(
            data_size=o["data_size"], score=o["score"], label=o.get("label", "")
        )
        for o in corpus.iter_jsonl(args.points)
    ]
    fit = scaling.fit_log(points)
    payload = json.dumps(fit.to_json_obj(), indent=2)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    print(payload)
    if args.csv:
        lines = ["data_size,score,fitted"]
        for p in points:
            lines.append(f"{p.data_size},{p.score},{scaling.project(fit, p.data_size)}")
        Path(args.csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {args.csv}")
    return 0


# -- pack --------------------------------------------------------------------------


def _parse_dist(spec: str, n: int, capacity: int, seed: int) -> list[int]:
    kind, _, params = spec.partition(":")
    if kind == "lognormal":
        mu_s, _, sigma_s = params.partition(",")
        return packing.lognormal_lengths(n, float(mu_s), float(sigma_s), capacity, seed)
    if kind == "uniform":
        import random as _random

        lo_s, _, hi_s = params.partition(",")
        rng = _random.Random(seed)
        return [rng.randint(int(lo_s), int(hi_s)) for _ in range(n)]
    raise SystemExit(f"unknown distribution {spec!r}; use lognormal:mu,sigma or uniform:lo,hi")


def cmd_pack_bench(args) -> int:
    import time as _time

    lengths = _parse_dist(args.dist, args.n, args.capacity, args.seed)
    start = _time.perf_counter()
    result = packing.benchmark(lengths, args.capacity, args.micro_batch)
    elapsed = _time.perf_counter() - start
    payload = result.to_json_obj()
    payload["seconds"] = round(elapsed, 4)
    payload["sequences_per_second"] = round(args.n / elapsed) if elapsed > 0 else None
    print(json.dumps(payload, indent=2))
    return 0


# -- evalsvc -----------------------------------------------------------------------


def cmd_evalsvc_serve(args) -> int:
    evalsvc_server.serve(args.data, args.port)
    return 0


def cmd_evalsvc_report(args) -> int:
    service = EvalService(args.data)
    print(json.dumps(service.report(args.task), indent=2))
    service.close()
    return 0


def cmd_evalsvc_create(args) -> int:
    obj = json.loads(Path(args.pairs).read_text(encoding="utf-8"))
    pairs = [TaskPair(**p) for p in obj["pairs"]]
    service = EvalService(args.data)
    task_id = service.create_task(
        pairs, raters=args.rater, gold_fraction=args.gold_fraction, seed=args.seed
    )
    print(task_id)
    service.close()
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="caplab", description=__doc__)
    top = parser.add_subparsers(dest="command", required=True)

    # annotate
    p_ann = top.add_parser("annotate", help="distributed caption annotation")
    ann_sub = p_ann.add_subparsers(dest="subcommand", required=True)

    p = ann_sub.add_parser("plan", help="create a job from a dataset manifest")
    p.add_argument("--dataset", required=True, help="manifest path or shard directory")
    p.add_argument("--job-dir", required=True)
    p.add_argument("--job", default=None, help="job id (default: derived)")
    p.add_argument("--task-id", default="caption-task")
    p.add_argument("--mode", choices=corpus.CAPTION_MODES, default="caption")
    p.add_argument("--template", default="default")
    p.add_argument("--max-retries", type=int, default=2)
    p.add_argument("--rate-limit", type=float, default=10.0)
    p.set_defaults(func=cmd_annotate_plan)

    for name in ("run", "resume"):
        p = ann_sub.add_parser(name, help="run (or resume) workers against a job")
        p.add_argument("--job-dir", required=True)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--endpoint", default=None)
        p.add_argument("--model-id", default="captioner")
        p.add_argument("--timeout", type=float, default=60.0)
        p.add_argument("--mock", action="store_true", help="use the in-process mock captioner")
        p.add_argument("--mock-latency", type=float, default=0.0)
        p.add_argument("--lease-duration", type=float, default=300.0)
        p.add_argument("--flush-interval", type=int, default=64)
        p.set_defaults(func=cmd_annotate_run)

    p = ann_sub.add_parser("finalize", help="dedupe records and write the output manifest")
    p.add_argument("--job-dir", required=True)
    p.set_defaults(func=cmd_annotate_finalize)

    p = ann_sub.add_parser("mock-server", help="serve the captioner wire format locally")
    p.add_argument("--port", type=int, default=8301)
    p.add_argument("--latency", type=float, default=0.0)
    p.set_defaults(func=cmd_annotate_mock_server)

    # stats
    p = top.add_parser("stats", help="corpus statistics report")
    p.add_argument("--dataset", required=True, help="manifest path or shard directory")
    p.add_argument("--subset", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--language", choices=corpus.LANGUAGES, default="EN")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stats)

    # eval
    p_eval = top.add_parser("eval", help="caption and OCR quality scoring")
    eval_sub = p_eval.add_subparsers(dest="subcommand", required=True)

    p = eval_sub.add_parser("anls", help="normalized Levenshtein similarity over files")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--field", default="text")
    p.set_defaults(func=cmd_eval_anls)

    p = eval_sub.add_parser("judge", help="judge-model caption scoring")
    p.add_argument("--candidates", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--endpoint", required=True)
    p.add_argument("--model-id", default="judge")
    p.add_argument("--field", default="text")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--rate-limit", type=float, default=None)
    p.set_defaults(func=cmd_eval_judge)

    p = eval_sub.add_parser("gsb", help="aggregate good/same/bad judgments")
    p.add_argument("--judgments", required=True)
    p.add_argument("--gold", default=None)
    p.add_argument("--threshold", type=float, default=0.95)
    p.set_defaults(func=cmd_eval_gsb)

    # mix
    p_mix = top.add_parser("mix", help="data mixture tools")
    mix_sub = p_mix.add_subparsers(dest="subcommand", required=True)

    p = mix_sub.add_parser("subset", help="stratified even-distribution subset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--strata-key", default="source_dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mix_subset)

    p = mix_sub.add_parser("quickeval", help="score a mixture via its k-sample subset")
    p.add_argument("--mixture", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--oracle-cmd", default=None)
    p.set_defaults(func=cmd_mix_quickeval)

    p = mix_sub.add_parser("compose", help="greedy halving search over group proportions")
    p.add_argument("--mixture", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--oracle-cmd", default=None)
    p.add_argument("--max-passes", type=int, default=4)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_mix_compose)

    p = mix_sub.add_parser("incremental", help="accept/maintain/reject a new dataset")
    p.add_argument("--mixture", required=True)
    p.add_argument("--new-dataset", required=True)
    p.add_argument("--group", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--oracle-cmd", default=None)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.set_defaults(func=cmd_mix_incremental)

    p = mix_sub.add_parser("plan", help="validate a staged curriculum")
    p.add_argument("--stages", required=True)
    p.set_defaults(func=cmd_mix_plan)

    p = mix_sub.add_parser("rankcheck", help="ranking consistency across data sizes")
    p.add_argument("--scores", required=True)
    p.set_defaults(func=cmd_mix_rankcheck)

    # scaling
    p_scaling = top.add_parser("scaling", help="scaling-law fits")
    scaling_sub = p_scaling.add_subparsers(dest="subcommand", required=True)
    p = scaling_sub.add_parser("fit", help="fit score = a*ln(size) + b")
    p.add_argument("--points", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_scaling_fit)

    # pack
    p_pack = top.add_parser("pack", help="sequence packing")
    pack_sub = p_pack.add_subparsers(dest="subcommand", required=True)
    p = pack_sub.add_parser("bench", help="packed vs naive padding waste")
    p.add_argument("--capacity", type=int, default=4096)
    p.add_argument("--micro-batch", type=int, default=64)
    p.add_argument("--dist", default="lognormal:5,1")
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_pack_bench)

    # evalsvc
    p_svc = top.add_parser("evalsvc", help="blinded rating service")
    svc_sub = p_svc.add_subparsers(dest="subcommand", required=True)
    p = svc_sub.add_parser("serve")
    p.add_argument("--port", type=int, default=8302)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_evalsvc_serve)
    p = svc_sub.add_parser("report")
    p.add_argument("--task", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_evalsvc_report)
    p = svc_sub.add_parser(
        "create",
        help="seed a task offline; while a server owns the data dir, use POST /tasks instead",
    )
    p.add_argument("--pairs", required=True, help="JSON file with a pairs array")
    p.add_argument("--rater", action="append", default=[], help="repeat per rater id")
    p.add_argument("--gold-fraction", type=float, default=0.10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_evalsvc_create)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
