"""Command-line entry point: ``mrgcn {inspect,train,eval,ablate,generate}``."""

import argparse
import json
import logging
import os
import sys

from . import synth
from .autodiff.checkpoint import CheckpointError, load_tensors, save_tensors
from .config import ConfigError, build_config, read_config_file, validate
from .encoders import MODALITY_OF
from .graph import GraphError, build_graph
from .rdf import NTriplesError, SplitError, load_split, read_ntriples
from .trainer import ModelConfig, TrainConfig, Trainer, TrainingError, ablate, format_ablation

log = logging.getLogger("mrgcn")

FLAGS = {
    "graph": (str, "N-Triples graph file"),
    "split": (str, "labelled split file (iri<TAB>label<TAB>partition)"),
    "out": (str, "output directory"),
    "checkpoint": (str, "model checkpoint to evaluate"),
    "policy": (str, "literal policy: merged, split (ablate/inspect also accept both)"),
    "modalities": (str, "num,tmp,txt,img,geo | all | none"),
    "epochs": (int, "maximum training epochs"),
    "lr": (float, "Adam learning rate"),
    "patience": (int, "early-stopping patience in epochs"),
    "hidden": (int, "hidden layer width"),
    "bases": (int, "number of basis matrices (omit for full weights)"),
    "seed": (int, "random seed (ablate uses seed .. seed+runs-1)"),
    "runs": (int, "seeded runs per ablation row"),
    "jobs": (int, "parallel worker processes for ablate"),
    "encoder_passes": (int, "literal chunks refreshed round-robin per epoch"),
    "dtype": (str, "float32 or float64"),
    "nodes": (int, "generate: number of entities"),
    "neighbors": (int, "generate: ring-lattice neighbours k"),
    "rewire": (float, "generate: rewiring probability"),
    "signal_entities": (int, "generate: labelled entities"),
    "attribute_probability": (float, "generate: probability of each literal attribute"),
    "separation": (float, "generate: class separation of the planted signal"),
    "image_size": (int, "image raster side length (multiple of 8)"),
}

COMMANDS = {
    "inspect": ("graph", "policy", "out"),
    "train": ("graph", "split", "out", "policy", "modalities", "epochs", "lr", "patience", "hidden", "bases",
              "seed", "encoder_passes", "dtype", "image_size"),
    "eval": ("graph", "split", "checkpoint", "out"),
    "ablate": ("graph", "split", "out", "policy", "modalities", "epochs", "lr", "patience", "hidden", "bases",
               "seed", "runs", "jobs", "encoder_passes", "dtype", "image_size"),
    "generate": ("out", "seed", "nodes", "neighbors", "rewire", "signal_entities", "attribute_probability",
                 "separation", "image_size"),
}


def make_parser():
    parser = argparse.ArgumentParser(prog="mrgcn", description="Multimodal R-GCN node classification")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, keys in COMMANDS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", help="key = value configuration file (flags override it)")
        for key in keys:
            kind, text = FLAGS[key]
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=kind, default=None, help=text)
    return parser


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _model_config(cfg, policy=None):
    return ModelConfig(hidden=cfg.hidden, bases=cfg.bases, modalities=cfg.modalities,
                       policy=policy or cfg.policy, dtype=cfg.dtype, image_size=cfg.image_size)


def _train_config(cfg, seed=None):
    return TrainConfig(epochs=cfg.epochs, lr=cfg.lr, patience=cfg.patience,
                       encoder_passes=cfg.encoder_passes, seed=cfg.seed if seed is None else seed)


def _load(cfg, policy):
    triples = list(read_ntriples(cfg.graph))
    graph = build_graph(triples, policy)
    split = load_split(cfg.split, graph) if cfg.split else None
    return triples, graph, split


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def graph_report(triples):
    """Statistics under both literal policies plus per-modality literal counts."""
    report = {}
    for policy in ("merged", "split"):
        stats = build_graph(triples, policy).statistics()
        report[policy] = {"entities": stats["entities"], "literals": stats["literals"]}
        report["facts"] = stats["facts"]
        report["relations"] = stats["relations"]
    counts = {name: 0 for name in ("num", "tmp", "txt", "img", "geo", "other")}
    for _, _, o in triples:
        if not isinstance(o, str):
            counts[MODALITY_OF.get(o.modality, "other")] += 1
    report["modalities"] = counts
    return report


def cmd_inspect(cfg):
    triples = list(read_ntriples(cfg.graph))
    report = graph_report(triples)
    print(f"facts      {report['facts']}")
    print(f"relations  {report['relations']}")
    for policy in ("merged", "split"):
        print(f"{policy:<7}    entities {report[policy]['entities']}  literals {report[policy]['literals']}")
    print("literals per modality (split count)")
    for name, count in report["modalities"].items():
        print(f"  {name:<6} {count}")
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        _write_json(os.path.join(cfg.out, "inspect.json"), report)
    return 0


def cmd_train(cfg):
    _, graph, split = _load(cfg, cfg.policy)
    os.makedirs(cfg.out, exist_ok=True)
    trainer = Trainer(graph, split, _model_config(cfg), _train_config(cfg))
    metrics_path = os.path.join(cfg.out, "metrics.jsonl")
    with open(metrics_path, "w", encoding="utf-8", newline="\n") as metrics:
        def on_epoch(record):
            for part in ("train", "valid"):
                if f"{part}_loss" in record:
                    row = {"epoch": record["epoch"], "split": part, "loss": record[f"{part}_loss"],
                           "accuracy": record[f"{part}_acc"]}
                    metrics.write(json.dumps(row, sort_keys=True) + "\n")
            log.info("epoch %d train %.4f", record["epoch"], record["train_loss"])

        result = trainer.fit(on_epoch)
        metrics.write(json.dumps({"epoch": result.best_epoch, "split": "test", "loss": None,
                                  "accuracy": result.test_accuracy}, sort_keys=True) + "\n")
    meta = {"model": result.config["model"], "train": result.config["train"], "classes": list(split.classes),
            "best_epoch": result.best_epoch}
    save_tensors(os.path.join(cfg.out, "model.ckpt"), trainer.state(), meta)
    summary = result.summary()
    summary["graph"] = os.path.basename(cfg.graph)
    summary["split"] = os.path.basename(cfg.split)
    _write_json(os.path.join(cfg.out, "summary.json"), summary)
    _write_json(os.path.join(cfg.out, "timing.json"), {"wall_time_seconds": result.wall_time})
    print(f"test accuracy {result.test_accuracy:.4f} (best epoch {result.best_epoch}, "
          f"stopped at {result.stopped_epoch})")
    return 0


def cmd_eval(cfg):
    tensors, meta = load_tensors(cfg.checkpoint)
    try:
        model_cfg = ModelConfig(**meta["model"])
        train_cfg = TrainConfig(**meta["train"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{cfg.checkpoint}: incompatible checkpoint metadata ({exc})") from None
    _, graph, split = _load(cfg, model_cfg.policy)
    if list(split.classes) != meta.get("classes"):
        raise ConfigError(f"split classes {list(split.classes)} differ from checkpoint {meta.get('classes')}")
    trainer = Trainer(graph, split, model_cfg, train_cfg)
    trainer.load_state(tensors)
    evaluation = trainer.evaluate("test")
    print(f"test accuracy {evaluation.accuracy:.4f}")
    report = {"test_accuracy": evaluation.accuracy, "confusion": evaluation.confusion.tolist(),
              "classes": list(split.classes)}
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        _write_json(os.path.join(cfg.out, "eval.json"), report)
    return 0


def cmd_ablate(cfg):
    policies = ("merged", "split") if cfg.policy == "both" else (cfg.policy,)
    os.makedirs(cfg.out, exist_ok=True)
    triples = list(read_ntriples(cfg.graph))
    texts, tables = [], {}
    for policy in policies:
        graph = build_graph(triples, policy)
        split = load_split(cfg.split, graph)
        table = ablate(graph.add_inverse_and_identity(), split, policy, cfg.modalities, cfg.runs, cfg.seed,
                       _model_config(cfg, policy), _train_config(cfg), jobs=cfg.jobs)
        title = f"{policy} literals ({cfg.runs} run{'s' if cfg.runs > 1 else ''}, seeds {cfg.seed}..{cfg.seed + cfg.runs - 1})"
        texts.append(format_ablation(table, title))
        tables[policy] = [{"configuration": r.name, "modalities": list(r.modalities), "absent": r.absent,
                           "accuracies": r.accuracies, "mean": None if r.absent else r.mean,
                           "std": None if r.absent else r.std} for r in table]
    text = "\n\n".join(texts) + "\n"
    with open(os.path.join(cfg.out, "ablation.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    _write_json(os.path.join(cfg.out, "ablation.json"), tables)
    print(text, end="")
    return 0


def cmd_generate(cfg):
    config = synth.SynthConfig(nodes=cfg.nodes, neighbors=cfg.neighbors, rewire=cfg.rewire,
                               signal_entities=cfg.signal_entities,
                               attribute_probability=cfg.attribute_probability,
                               separation=cfg.separation, image_size=cfg.image_size, seed=cfg.seed)
    paths = synth.write_dataset(synth.generate(config), cfg.out)
    for path in paths.values():
        print(path)
    return 0


HANDLERS = {"inspect": cmd_inspect, "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate,
            "generate": cmd_generate}


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = read_config_file(args.config) if args.config else {}
        unused = set(file_values) - set(COMMANDS[args.command])
        if unused:
            raise ConfigError(f"{args.command} does not accept config keys: {', '.join(sorted(unused))}")
        flags = {k: getattr(args, k) for k in COMMANDS[args.command]}
        cfg = validate(build_config(file_values, flags), args.command)
    except ConfigError as exc:
        print(f"mrgcn: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        return HANDLERS[args.command](cfg)
    except NTriplesError as exc:
        print(f"mrgcn: parse error: {exc}", file=sys.stderr)
    except (SplitError, GraphError, CheckpointError, ConfigError) as exc:
        print(f"mrgcn: {exc}", file=sys.stderr)
    except TrainingError as exc:
        print(f"mrgcn: training aborted: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"mrgcn: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
