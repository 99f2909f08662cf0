"""Command-line surface: train, eval, ablate, linksplit, diagnostics.

Every command writes a RunManifest next to its outputs with the fully
resolved configuration and a content hash of the inputs, so a run can be
reproduced bit for bit. Errors leave a machine-readable JSON object on
stderr and a nonzero exit code.

Heavy imports happen inside main() so that SAIL_THREADS can cap BLAS
parallelism before numpy loads.
"""

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# config file: flat key=value with typed parsing and unknown-key rejection
# ---------------------------------------------------------------------------

def _coerce(text, target_type, where):
    if target_type is bool:
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise CliError(f"{where}: expected a boolean, got {text!r}")
    try:
        return target_type(text)
    except ValueError:
        raise CliError(f"{where}: expected {target_type.__name__}, got {text!r}")


def parse_config_file(path, config_cls):
    """Read key=value lines into constructor kwargs for ``config_cls``."""
    known = {f.name: f.type for f in fields(config_cls)}
    overrides = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in known:
                raise CliError(f"{path}:{lineno}: unknown key {key!r}")
            overrides[key] = _coerce(value, known[key], f"{path}:{lineno}")
    return overrides


def format_config(cfg) -> str:
    return "".join(f"{k} = {v}\n" for k, v in sorted(cfg.to_dict().items()))


def resolve_config(args):
    """Defaults, overridden by --config file, overridden by --seed."""
    from sail.training import TrainConfig

    overrides = {}
    if getattr(args, "config", None):
        if not Path(args.config).is_file():
            raise CliError(f"config file not found: {args.config}")
        overrides = parse_config_file(args.config, TrainConfig)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    cfg = TrainConfig(**overrides)
    try:
        cfg.validate()
    except ValueError as exc:
        raise CliError(f"invalid configuration: {exc}") from exc
    return cfg


# ---------------------------------------------------------------------------
# run manifest
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    dataset: str
    config: dict
    seed: int
    content_hash: str
    outputs: list = field(default_factory=list)
    version: str = ""

    def write(self, out_dir):
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


def content_hash(dataset_dirs, cfg_text: str, seed: int) -> str:
    h = hashlib.sha256()
    for d in dataset_dirs:
        d = Path(d)
        for name in sorted(p.name for p in d.iterdir() if p.is_file()):
            h.update(name.encode())
            h.update((d / name).read_bytes())
    h.update(cfg_text.encode())
    h.update(str(seed).encode())
    return h.hexdigest()


def _make_manifest(command, data_dir, cfg, outputs):
    import sail

    return RunManifest(command=command, dataset=str(data_dir),
                       config=cfg.to_dict(), seed=cfg.seed,
                       content_hash=content_hash([data_dir], format_config(cfg),
                                                 cfg.seed),
                       outputs=[str(o) for o in outputs],
                       version=sail.__version__)


def _load_graph(data_dir):
    from sail.dataset import DatasetError, load_dataset

    try:
        return load_dataset(data_dir)
    except DatasetError as exc:
        raise CliError(str(exc)) from exc


def _read_meta(data_dir) -> dict:
    return json.loads((Path(data_dir) / "meta.json").read_text())


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    from sail import training

    g = _load_graph(args.data)
    cfg = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.jsonl"
    ckpt_path = out / "checkpoint.sailckpt"
    outputs = [ckpt_path, log_path, out / "config.resolved.txt"]

    if args.sweep:
        result = training.sweep(g, cfg)
        cfg = result.best_config
        state = result.best_state
        sweep_csv = out / "sweep_results.csv"
        with open(sweep_csv, "w") as fh:
            fh.write("crf_alpha,reg_weight,val_accuracy\n")
            for row in result.table:
                fh.write(f"{row['crf_alpha']},{row['reg_weight']},"
                         f"{row['val_accuracy']:.6f}\n")
        outputs.append(sweep_csv)
        with open(log_path, "w") as fh:
            for record in state.history:
                fh.write(json.dumps(record) + "\n")
    else:
        with open(log_path, "w") as fh:
            def log_fn(record):
                fh.write(json.dumps(record) + "\n")

            state = training.train(g, cfg, log_fn=log_fn)

    training.save_state(state, ckpt_path)
    (out / "config.resolved.txt").write_text(format_config(cfg))
    _make_manifest("train", args.data, cfg, outputs).write(out)
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

EVAL_TASKS = ("classify", "cluster", "linkpred", "mad", "diagnostics")


def _config_for_checkpoint(args):
    from sail.training import TrainConfig

    if getattr(args, "config", None):
        return resolve_config(args)
    manifest_path = Path(args.checkpoint).parent / "manifest.json"
    if not manifest_path.is_file():
        raise CliError("no --config given and no manifest.json found next to "
                       f"the checkpoint ({manifest_path})")
    manifest = json.loads(manifest_path.read_text())
    cfg = TrainConfig(**manifest["config"])
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_eval(args) -> int:
    import numpy as np

    from sail import evaluation, training
    from sail.dataset import load_edge_list
    from sail.graph import Graph
    from sail.rng import stream
    from sail.samplers import sample_eval_negatives

    g = _load_graph(args.data)
    cfg = _config_for_checkpoint(args)
    state = training.load_state(args.checkpoint, cfg)
    if state.student.w.shape[0] != g.num_features:
        raise CliError(f"checkpoint expects {state.student.w.shape[0]} features "
                       f"but dataset has {g.num_features}")
    tasks = args.tasks or list(EVAL_TASKS)
    for t in tasks:
        if t not in EVAL_TASKS:
            raise CliError(f"unknown task {t!r}; choices: {EVAL_TASKS}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset_name = Path(args.data).name
    emb = evaluation.EmbeddingSet(
        matrix=training.embeddings(g, cfg, state.student),
        provenance={"checkpoint": str(args.checkpoint),
                    "config_hash": cfg.config_hash()})

    reports = []
    outputs = []

    def emit(task, payload):
        path = out / f"report_{task}.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        outputs.append(path)

    for task in tasks:
        if task == "classify":
            try:
                probe = evaluation.linear_probe(emb, g.labels, g.splits)
            except ValueError as exc:
                raise CliError(f"classify: {exc}") from exc
            report = evaluation.MetricsReport(
                dataset=dataset_name, task="classification",
                value=probe.mean_accuracy, std=probe.std_accuracy,
                seed_count=len(probe.per_seed), config_hash=cfg.config_hash(),
                provenance={**emb.provenance,
                            "protocol": "in-repo logistic probe"})
            reports.append(report)
            emit(task, json.loads(report.to_json()))
        elif task == "cluster":
            if g.labels is None:
                raise CliError("cluster: labels required")
            k = int(_read_meta(args.data).get("num_classes") or
                    int(g.labels.max()) + 1)
            nmi = evaluation.kmeans_nmi(emb, g.labels, k, seed=cfg.seed)
            report = evaluation.MetricsReport(
                dataset=dataset_name, task="clustering_nmi", value=nmi,
                config_hash=cfg.config_hash(), provenance=dict(emb.provenance))
            reports.append(report)
            emit(task, json.loads(report.to_json()))
        elif task == "linkpred":
            test_path = Path(args.data) / "test_edges.tsv"
            if not test_path.is_file():
                raise CliError(f"linkpred: {test_path} not found; evaluate on a "
                               "linksplit output directory")
            pos = load_edge_list(test_path)
            # negatives must be non-edges of the full graph: train + test
            full = Graph.build(g.n, np.concatenate([g.undirected_edges(), pos]),
                               g.features)
            neg = sample_eval_negatives(full, len(pos),
                                        stream(cfg.seed, "eval-negatives"))
            auc = evaluation.link_auc(emb, pos, neg, kind=cfg.score)
            report = evaluation.MetricsReport(
                dataset=dataset_name, task="link_auc", value=auc,
                config_hash=cfg.config_hash(),
                provenance={**emb.provenance, "negatives": len(pos)})
            reports.append(report)
            emit(task, json.loads(report.to_json()))
        elif task == "mad":
            mad = evaluation.mad_suite(emb, g, seed=cfg.seed)
            payload = {"dataset": dataset_name, "task": "mad",
                       "config_hash": cfg.config_hash(), **mad.to_dict()}
            for key in ("mad_nei", "mad_ratio"):
                value = getattr(mad, key)
                if value is not None:
                    reports.append(evaluation.MetricsReport(
                        dataset=dataset_name, task=key, value=value,
                        config_hash=cfg.config_hash()))
            emit(task, payload)
        elif task == "diagnostics":
            diag = evaluation.dataset_diagnostics(g)
            emit(task, {"dataset": dataset_name, **diag})

    if reports:
        table = out / "metrics_table.csv"
        table.write_text(evaluation.metrics_table_csv(reports))
        outputs.append(table)
    _make_manifest("eval", args.data, cfg, outputs).write(out)
    return 0


# ---------------------------------------------------------------------------
# linksplit
# ---------------------------------------------------------------------------

def link_split(g, gen):
    """Per-node 20% test-edge selection (rounding down); a selection is
    skipped when it would leave either endpoint with no training edge."""
    import numpy as np

    edges = g.undirected_edges()
    m = len(edges)
    deg = g.degrees.copy()
    quota = (0.2 * deg).astype(np.int64)  # floor
    incident = [[] for _ in range(g.n)]
    for e, (u, v) in enumerate(edges):
        incident[u].append(e)
        incident[v].append(e)
    selected = np.zeros(m, dtype=bool)
    sel_count = np.zeros(g.n, dtype=np.int64)
    rem_deg = deg.copy()
    for u in gen.permutation(g.n):
        need = quota[u] - sel_count[u]
        if need <= 0:
            continue
        cand = np.asarray([e for e in incident[u] if not selected[e]],
                          dtype=np.int64)
        for e in cand[gen.permutation(len(cand))]:
            if need <= 0:
                break
            a, b = edges[e]
            if rem_deg[a] <= 1 or rem_deg[b] <= 1:
                continue
            selected[e] = True
            rem_deg[a] -= 1
            rem_deg[b] -= 1
            sel_count[a] += 1
            sel_count[b] += 1
            need -= 1
    return edges[~selected], edges[selected]


def cmd_linksplit(args) -> int:
    from sail.dataset import save_dataset, write_edge_list
    from sail.graph import Graph
    from sail.rng import stream

    g = _load_graph(args.data)
    cfg = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    keep, test = link_split(g, stream(cfg.seed, "linksplit"))
    train_graph = Graph.build(g.n, keep, g.features, labels=g.labels,
                              splits=g.splits)
    num_classes = int(_read_meta(args.data).get("num_classes", 0))
    save_dataset(out, train_graph, num_classes=num_classes)
    test_path = out / "test_edges.tsv"
    write_edge_list(test_path, test)
    outputs = [out / "edges.tsv", out / "features.tsv", out / "meta.json",
               test_path]
    _make_manifest("linksplit", args.data, cfg, outputs).write(out)
    return 0


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------

ABLATION_VARIANTS = (
    ("emi", False, False),
    ("emi_intra", True, False),
    ("emi_inter", False, True),
    ("full", True, True),
)


def cmd_ablate(args) -> int:
    from dataclasses import replace

    from sail import evaluation, training
    from sail.dataset import save_dataset
    from sail.graph import Graph
    from sail.rng import stream
    from sail.samplers import sample_eval_negatives

    g = _load_graph(args.data)
    base_cfg = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    k = int(_read_meta(args.data).get("num_classes") or
            (int(g.labels.max()) + 1 if g.labels is not None else 0))

    rows = []
    for seed in range(base_cfg.seed, base_cfg.seed + args.num_seeds):
        keep, test_pos = link_split(g, stream(seed, "linksplit"))
        train_graph = Graph.build(g.n, keep, g.features, labels=g.labels,
                                  splits=g.splits)
        import numpy as np

        full = Graph.build(g.n, np.concatenate([keep, test_pos]), g.features)
        test_neg = sample_eval_negatives(full, len(test_pos),
                                         stream(seed, "eval-negatives"))
        for name, intra_on, inter_on in ABLATION_VARIANTS:
            cfg = replace(base_cfg, seed=seed, intra_enabled=intra_on,
                          inter_enabled=inter_on)
            state = training.train(g, cfg)
            emb = training.embeddings(g, cfg, state.student)
            acc = nmi = float("nan")
            if g.labels is not None and g.splits is not None:
                acc = evaluation.linear_probe(emb, g.labels, g.splits).mean_accuracy
            if g.labels is not None and k >= 2:
                nmi = evaluation.kmeans_nmi(emb, g.labels, k, seed=seed)
            link_state = training.train(train_graph, cfg)
            link_emb = training.embeddings(train_graph, cfg, link_state.student)
            auc = evaluation.link_auc(link_emb, test_pos, test_neg, kind=cfg.score)
            rows.append({"variant": name, "seed": seed, "classification": acc,
                         "clustering_nmi": nmi, "link_auc": auc})

    per_seed = out / "ablation.csv"
    with open(per_seed, "w") as fh:
        fh.write("variant,seed,classification,clustering_nmi,link_auc\n")
        for r in rows:
            fh.write(f"{r['variant']},{r['seed']},{r['classification']:.6f},"
                     f"{r['clustering_nmi']:.6f},{r['link_auc']:.6f}\n")
    summary = out / "ablation_summary.csv"
    with open(summary, "w") as fh:
        fh.write("variant,classification,clustering_nmi,link_auc\n")
        for name, _, _ in ABLATION_VARIANTS:
            import numpy as np

            sub = [r for r in rows if r["variant"] == name]
            fh.write(f"{name},"
                     f"{np.mean([r['classification'] for r in sub]):.6f},"
                     f"{np.mean([r['clustering_nmi'] for r in sub]):.6f},"
                     f"{np.mean([r['link_auc'] for r in sub]):.6f}\n")
    _make_manifest("ablate", args.data, base_cfg,
                   [per_seed, summary]).write(out)
    return 0


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def cmd_diagnostics(args) -> int:
    from sail import evaluation

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for data_dir in args.data:
        g = _load_graph(data_dir)
        diag = evaluation.dataset_diagnostics(g)
        entries.append({"dataset": Path(data_dir).name, **diag})
    normalized = evaluation.normalize_inverse_smoothness(
        [e["inverse_smoothness"] for e in entries])
    for e, v in zip(entries, normalized):
        e["normalized_inverse_smoothness"] = v
    path = out / "diagnostics.json"
    path.write_text(json.dumps(entries, indent=2, sort_keys=True,
                               default=str) + "\n")
    csv_path = out / "diagnostics.csv"
    with open(csv_path, "w") as fh:
        fh.write("dataset,feature_smoothness,normalized_inverse_smoothness,"
                 "clustering_coefficient\n")
        for e in entries:
            fh.write(f"{e['dataset']},{e['feature_smoothness']:.6g},"
                     f"{e['normalized_inverse_smoothness']:.6g},"
                     f"{e['clustering_coefficient']:.6g}\n")
    cfg = resolve_config(args)
    manifest = RunManifest(command="diagnostics", dataset=";".join(args.data),
                           config=cfg.to_dict(), seed=cfg.seed,
                           content_hash=content_hash(args.data,
                                                     format_config(cfg), cfg.seed),
                           outputs=[str(path), str(csv_path)])
    manifest.write(out)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sail",
        description="Self-augmented contrastive node-embedding training and "
                    "evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train an encoder on a dataset")
    train.add_argument("--data", required=True)
    train.add_argument("--config")
    train.add_argument("--out", required=True)
    train.add_argument("--seed", type=int)
    train.add_argument("--sweep", action="store_true",
                       help="grid-search mixing/regularization weights by "
                            "validation probe accuracy")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a trained checkpoint")
    ev.add_argument("--data", required=True)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--config")
    ev.add_argument("--out", required=True)
    ev.add_argument("--seed", type=int)
    ev.add_argument("--tasks", nargs="+", metavar="TASK",
                    help=f"subset of {EVAL_TASKS}")
    ev.set_defaults(func=cmd_eval)

    ab = sub.add_parser("ablate", help="train and score all loss-term variants")
    ab.add_argument("--data", required=True)
    ab.add_argument("--config")
    ab.add_argument("--out", required=True)
    ab.add_argument("--seed", type=int)
    ab.add_argument("--num-seeds", type=int, default=1)
    ab.set_defaults(func=cmd_ablate)

    ls = sub.add_parser("linksplit",
                        help="hold out 20%% of each node's edges for testing")
    ls.add_argument("--data", required=True)
    ls.add_argument("--config")
    ls.add_argument("--out", required=True)
    ls.add_argument("--seed", type=int)
    ls.set_defaults(func=cmd_linksplit)

    diag = sub.add_parser("diagnostics",
                          help="feature smoothness / locality of datasets")
    diag.add_argument("--data", nargs="+", required=True)
    diag.add_argument("--config")
    diag.add_argument("--out", required=True)
    diag.add_argument("--seed", type=int)
    diag.set_defaults(func=cmd_diagnostics)
    return parser


def _apply_thread_cap():
    cap = os.environ.get("SAIL_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def main(argv=None) -> int:
    _apply_thread_cap()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}),
              file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive surface
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
