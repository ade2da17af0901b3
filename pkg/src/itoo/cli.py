"""Command-line surface: data ingest, index building and queries, metric
training and evaluation, recommendations, pipeline and DAG runs, and the
HTTP service."""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import dataio, demo, metric, server
from .config import load_config
from .dag import TaskDag, execute_dag, load_dag_file
from .engine import Engine
from .errors import ItooError
from .pipeline import run_ootd_pipeline


def _emit(args, payload: dict, text: str | None = None) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, default=str))
    else:
        print(text if text is not None else json.dumps(payload, indent=2, default=str))


def _engine(args) -> Engine:
    cfg = load_config(args.config) if args.config else load_config()
    return Engine.open(args.data_dir, cfg)


def cmd_ingest(args) -> int:
    cfg = load_config(args.config) if args.config else load_config()
    engine = Engine(cfg, args.data_dir)
    embedding_paths = None
    if args.emb_classifier or args.emb_tagger or args.emb_search:
        if not (args.emb_classifier and args.emb_tagger and args.emb_search):
            print("error: provide all three embedding files or none", file=sys.stderr)
            return 1
        embedding_paths = (args.emb_classifier, args.emb_tagger, args.emb_search)
    counts = engine.ingest_files(
        items_path=args.items,
        ootds_path=args.ootds,
        users_path=args.users,
        interactions_path=args.interactions,
        embedding_paths=embedding_paths,
    )
    _emit(args, {"ingested": counts},
          "\n".join(f"{k}: {v}" for k, v in counts.items()) or "nothing to ingest")
    return 0


def cmd_index_build(args) -> int:
    engine = _engine(args)
    t0 = time.time()
    engine.rebuild()
    payload = {
        "indexed_items": engine.catalog.item_count(),
        "super_categories": sorted(engine.catalog.indexes),
        "seconds": round(time.time() - t0, 3),
        "snapshot_version": engine.require_snapshot().version,
    }
    _emit(args, payload, f"indexed {payload['indexed_items']} items in {payload['seconds']}s")
    return 0


def cmd_index_query(args) -> int:
    engine = _engine(args)
    if args.item_id is not None:
        hits, version = engine.similar_items(args.item_id, args.k)
    else:
        vec = np.array([float(x) for x in args.vector.split(",")])
        hits, version = engine.similar_by_vector(args.super, vec, args.k)
    payload = {
        "snapshot_version": version,
        "results": [{"item_id": i, "score": s} for i, s in hits],
    }
    _emit(args, payload, "\n".join(f"{i}\t{s:.6f}" for i, s in hits))
    return 0


def cmd_train(args) -> int:
    labels = dataio.load_labels(args.labels)
    rng = np.random.default_rng(args.seed)
    table = metric.EmbeddingTable.random_init(sorted(labels), args.dim, rng)
    config = metric.TrainConfig(
        n_pairs=args.n_pairs,
        temperature=args.tau,
        learning_rate=args.lr,
        epochs=args.epochs,
        seed=args.seed,
    )
    result = metric.train(table, labels, config)
    np.savez(
        args.out,
        ids=np.array([str(i) for i in result.table.ids]),
        rows=result.table.rows,
    )
    payload = {
        "epochs": args.epochs,
        "final_loss": result.loss_curve[-1],
        "smoothed_final": result.smoothed_curve[-1],
        "table": str(args.out),
    }
    _emit(args, payload, f"trained {args.epochs} epochs, final loss {result.loss_curve[-1]:.6f}")
    return 0


def _load_table(path: str) -> metric.EmbeddingTable:
    data = np.load(path, allow_pickle=False)
    return metric.EmbeddingTable(list(data["ids"]), data["rows"])


def cmd_eval(args) -> int:
    labels = dataio.load_labels(args.labels)
    table = _load_table(args.table)
    by_class: dict[int, list[str]] = {}
    for img, cls in labels.items():
        by_class.setdefault(cls, []).append(img)
    queries = [sorted(imgs)[0] for imgs in by_class.values() if len(imgs) >= 2]
    gallery = [i for i in labels if i not in set(queries)]
    ks = [int(k) for k in args.ks.split(",")]
    report = metric.evaluate_topk(table, queries, gallery, labels, ks)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            for row in report.rows():
                f.write(json.dumps(row) + "\n")
    payload = {"report": report.rows(), "skipped": report.n_skipped}
    _emit(args, payload, "\n".join(f"top-{r['k']}: {r['accuracy']:.4f}" for r in report.rows()))
    return 0


def cmd_recommend(args) -> int:
    engine = _engine(args)
    if args.what == "feed":
        entries, version = engine.feed(args.user, args.k)
    elif args.what == "similar":
        if args.ootd is not None:
            entries, version = engine.similar_ootds(args.ootd, args.k)
        else:
            hits, version = engine.similar_items(args.item, args.k)
            payload = {"snapshot_version": version,
                       "results": [{"item_id": i, "score": s} for i, s in hits]}
            _emit(args, payload, "\n".join(f"{i}\t{s:.6f}" for i, s in hits))
            return 0
    else:
        entries, version = engine.style_leaders(args.user, args.k)
    payload = {
        "snapshot_version": version,
        "results": [{"id": e.id, "score": e.score, "source": e.source} for e in entries],
    }
    _emit(args, payload, "\n".join(f"{e.id}\t{e.score:.6f}\t{e.source}" for e in entries))
    return 0


def cmd_pipeline_run(args) -> int:
    cfg = load_config(args.config) if args.config else load_config()
    engine = Engine(cfg, args.data_dir) if args.data_dir else Engine(cfg)
    outfit = []
    for part in args.items.split(","):
        sub, _, color = part.partition(":")
        outfit.append((sub.strip(), color.strip() or "gray"))
    image = demo.register_outfit(engine, outfit)
    analysis = run_ootd_pipeline(image, engine.plugins, engine.hierarchy,
                                 cfg.iou_threshold, cfg.workers)
    payload = {
        "crops": [
            {
                "index": c.index,
                "sub_category": c.sub_category,
                "box": [c.box.x, c.box.y, c.box.w, c.box.h],
                "super_category": c.box.super_category,
                "tags": sorted(map(list, c.tags)),
                "has_vector": c.vector is not None,
            }
            for c in analysis.crops
        ],
        "staged": [
            {"super_category": s.super_category, "crop_index": s.crop_index}
            for s in analysis.staged
        ],
        "errors": list(analysis.errors),
    }
    _emit(args, payload)
    return 0


def cmd_dag_run(args) -> int:
    names, edges = load_dag_file(args.file)

    def make_task(name):
        def task(inputs):
            time.sleep(args.sleep)
            return name

        return task

    dag = TaskDag({n: make_task(n) for n in names}, tuple(edges))
    result = execute_dag(dag, args.workers)
    payload = {
        "completion_order": result.completion_order,
        "outcomes": {n: o.state for n, o in result.outcomes.items()},
        "trace": [
            {"task": t.task, "start": t.start, "end": t.end, "worker": t.worker}
            for t in sorted(result.trace, key=lambda t: t.start)
        ],
    }
    if getattr(args, "json", False):
        print(json.dumps(payload))
    else:
        # schedule trace as JSON-lines, one entry per executed task
        for t in payload["trace"]:
            print(json.dumps(t))
        print("order:", " ".join(result.completion_order))
    return 0


def cmd_seed_demo(args) -> int:
    cfg = load_config(args.config) if args.config else load_config()
    engine = Engine(cfg, args.data_dir)
    demo.generate_demo_dataset(engine, seed=args.seed)
    payload = {
        "users": len(engine.users),
        "ootds": len(engine.ootds),
        "items": len(engine.items),
        "events": len(engine.events),
    }
    _emit(args, payload, f"seeded demo dataset: {payload}")
    return 0


def cmd_serve(args) -> int:
    engine = _engine(args)
    print(f"serving on http://{args.host}:{args.port}", file=sys.stderr)
    server.serve_forever(engine, args.host, args.port, args.static)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="itoo", description=__doc__)
    parser.add_argument("--config", help="key-value config file (ITOO_* env vars override)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load data files into a data directory")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--items")
    p.add_argument("--ootds")
    p.add_argument("--users")
    p.add_argument("--interactions")
    p.add_argument("--emb-classifier")
    p.add_argument("--emb-tagger")
    p.add_argument("--emb-search")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("index", help="build or query the vector indexes")
    index_sub = p.add_subparsers(dest="index_command", required=True)
    b = index_sub.add_parser("build")
    b.add_argument("--data-dir", required=True)
    b.add_argument("--json", action="store_true")
    b.set_defaults(fn=cmd_index_build)
    q = index_sub.add_parser("query")
    q.add_argument("--data-dir", required=True)
    q.add_argument("--super", help="super-category (with --vector)")
    q.add_argument("--item-id", type=int)
    q.add_argument("--vector", help="comma-separated floats")
    q.add_argument("--k", type=int, default=10)
    q.add_argument("--json", action="store_true")
    q.set_defaults(fn=cmd_index_query)

    p = sub.add_parser("train", help="metric-learning training on a labels file")
    p.add_argument("--labels", required=True, help="CSV image_id,class_id")
    p.add_argument("--out", required=True, help="output .npz table")
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--n-pairs", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="top-k retrieval evaluation")
    p.add_argument("--labels", required=True)
    p.add_argument("--table", required=True, help=".npz table from train")
    p.add_argument("--ks", default="1,5,10,20")
    p.add_argument("--report", help="write JSON-lines report here")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("recommend", help="personalized reads")
    rec_sub = p.add_subparsers(dest="what", required=True)
    f = rec_sub.add_parser("feed")
    f.add_argument("--data-dir", required=True)
    f.add_argument("--user", required=True)
    f.add_argument("--k", type=int, default=10)
    f.add_argument("--json", action="store_true")
    f.set_defaults(fn=cmd_recommend)
    s = rec_sub.add_parser("similar")
    s.add_argument("--data-dir", required=True)
    s.add_argument("--ootd")
    s.add_argument("--item", type=int)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--json", action="store_true")
    s.set_defaults(fn=cmd_recommend)
    l = rec_sub.add_parser("leaders")
    l.add_argument("--data-dir", required=True)
    l.add_argument("--user", required=True)
    l.add_argument("--k", type=int, default=5)
    l.add_argument("--json", action="store_true")
    l.set_defaults(fn=cmd_recommend)

    p = sub.add_parser("pipeline", help="run the inference pipeline")
    pipe_sub = p.add_subparsers(dest="pipeline_command", required=True)
    r = pipe_sub.add_parser("run")
    r.add_argument("--items", required=True, help="outfit spec, e.g. 'jeans:blue,t-shirt:white'")
    r.add_argument("--data-dir")
    r.add_argument("--json", action="store_true")
    r.set_defaults(fn=cmd_pipeline_run)

    p = sub.add_parser("dag", help="execute a DAG definition file")
    dag_sub = p.add_subparsers(dest="dag_command", required=True)
    r = dag_sub.add_parser("run")
    r.add_argument("--file", required=True)
    r.add_argument("--workers", type=int, default=2)
    r.add_argument("--sleep", type=float, default=0.05)
    r.add_argument("--json", action="store_true")
    r.set_defaults(fn=cmd_dag_run)

    p = sub.add_parser("seed-demo", help="generate the synthetic demo dataset")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_seed_demo)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8763)
    p.add_argument("--static", help="directory with the demo UI build")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "index" and args.index_command == "query":
        if args.item_id is None and not (args.super and args.vector):
            parser.error("index query needs --item-id or both --super and --vector")
    try:
        return args.fn(args)
    except ItooError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyError as exc:
        print(f"error: unknown key {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
