"""Full-batch training with chunked encoder refresh, early stopping and ablations."""

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import ops
from .autodiff.optim import Adam
from .autodiff.tensor import Tensor, no_grad
from .encoders import MODALITY_NAMES, EncoderConfig, FeatureAssembler, parse_modalities
from .graph import KnowledgeGraph, LiteralPolicy, build_graph
from .model import MRGCN

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class ModelConfig:
    hidden: int = 16
    layers: int = 2
    bases: int = None
    modalities: tuple = ()
    policy: str = "split"
    bias: bool = True
    dtype: str = "float32"
    fan_in_gain: bool = True
    text_last_padding: int = 2
    image_size: int = 64
    encoder_batch: int = 64

    def __post_init__(self):
        if self.layers != 2:
            raise ValueError("only two-layer models are supported")
        self.modalities = parse_modalities(self.modalities)
        self.policy = LiteralPolicy(self.policy).value


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 0.01
    patience: int = 7
    encoder_passes: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.patience >= self.epochs:
            raise ValueError("patience must be smaller than the number of epochs")
        if self.encoder_passes < 1:
            raise ValueError("encoder_passes must be at least 1")


@dataclass
class RunResult:
    history: list
    test_accuracy: float
    best_epoch: int
    stopped_epoch: int
    seed: int
    config: dict
    wall_time: float = field(default=0.0, compare=False)

    def summary(self):
        """Deterministic key-value record (wall time excluded)."""
        last = self.history[-1] if self.history else {}
        return {
            "seed": self.seed,
            "best_epoch": self.best_epoch,
            "stopped_epoch": self.stopped_epoch,
            "final_train_loss": last.get("train_loss"),
            "final_valid_loss": last.get("valid_loss"),
            "test_accuracy": self.test_accuracy,
            "config": self.config,
        }


class EarlyStopping:
    """Track the best monitored loss; signal a stop after ``patience`` epochs without improvement."""

    def __init__(self, patience):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = None
        self.best_state = None
        self.wait = 0

    def update(self, epoch, loss, snapshot):
        """Record ``loss`` for ``epoch``; ``snapshot()`` is called on improvement. Returns True to stop."""
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
            self.best_state = snapshot()
            self.wait = 0
            return False
        self.wait += 1
        return self.wait >= self.patience


@dataclass
class Evaluation:
    accuracy: float
    confusion: np.ndarray  # confusion[true, predicted]


def evaluate_predictions(probabilities, nodes, labels, num_classes):
    """Accuracy and confusion counts; argmax ties go to the lowest class index."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        raise ValueError("cannot evaluate on an empty node set")
    labels = np.asarray(labels, dtype=np.int64)
    pred = np.argmax(np.asarray(probabilities)[nodes], axis=1)
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, pred), 1)
    return Evaluation(float((pred == labels).mean()), confusion)


def majority_class_accuracy(train_labels, test_labels, num_classes):
    """Accuracy of always predicting the most frequent training class."""
    counts = np.bincount(np.asarray(train_labels, dtype=np.int64), minlength=num_classes)
    probs = np.zeros((len(test_labels), num_classes))
    probs[:, int(np.argmax(counts))] = 1.0
    return evaluate_predictions(probs, np.arange(len(test_labels)), test_labels, num_classes).accuracy


class Trainer:
    """Holds one model + encoders for a graph and split."""

    def __init__(self, graph, split, model_config, train_config):
        if not isinstance(graph, KnowledgeGraph):
            raise TypeError("graph must be a KnowledgeGraph")
        self.graph = graph if graph.augmented else graph.add_inverse_and_identity()
        self.split = split
        self.mc, self.tc = model_config, train_config
        self.dtype = np.dtype(model_config.dtype)
        rng = np.random.default_rng(train_config.seed)
        self.stacked = self.graph.stacked_adjacency()
        self.stacked.data = self.stacked.data.astype(self.dtype)
        enc_cfg = EncoderConfig(model_config.fan_in_gain, model_config.text_last_padding,
                                model_config.encoder_batch, model_config.image_size)
        self.features = FeatureAssembler(self.graph, model_config.modalities, rng, self.dtype, enc_cfg)
        self.model = MRGCN(self.graph.num_nodes, self.graph.num_relations, self.features.width,
                           split.num_classes, model_config.hidden, model_config.bases,
                           model_config.bias, rng, self.dtype)
        self.params = self.model.parameters() + self.features.parameters()
        self.names = [f"model.{k}" for k, _ in self.model.named_parameters()] + \
                     [f"encoders.{k}" for k, _ in self.features.named_parameters()]
        self.train_nodes, self.train_labels = split.indices(self.graph, "train")
        self.valid_nodes, self.valid_labels = split.indices(self.graph, "valid")
        self.test_nodes, self.test_labels = split.indices(self.graph, "test")

    # -- parameter snapshots --------------------------------------------

    def state(self):
        return {name: p.data.copy() for name, p in zip(self.names, self.params)}

    def load_state(self, state):
        for name, p in zip(self.names, self.params):
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"parameter {name}: expected shape {p.shape}, got {arr.shape}")
            p.data = arr.astype(self.dtype)

    # -- forward passes -------------------------------------------------

    def predict(self):
        """Class probabilities for every node with all literals freshly encoded."""
        with no_grad():
            self.features.refresh_all()
            f = Tensor(self.features.feature_matrix()) if self.features.width else None
            return ops.softmax_rows(self.model(self.stacked, f)).data

    def evaluate(self, partition="test"):
        nodes, labels = self.split.indices(self.graph, partition)
        return evaluate_predictions(self.predict(), nodes, labels, self.split.num_classes)

    def _diagnostics(self, epoch):
        norms = ", ".join(f"{n}={np.linalg.norm(p.data):.3g}" for n, p in zip(self.names, self.params))
        return f"non-finite loss at epoch {epoch}; parameter norms: {norms}"

    def fit(self, on_epoch=None):
        tc = self.tc
        t0 = time.perf_counter()
        opt = Adam(self.params, lr=tc.lr)
        stopper = EarlyStopping(tc.patience)
        history = []
        monitor_valid = len(self.valid_nodes) > 0
        self.features.refresh_all()
        stopped = tc.epochs
        for epoch in range(1, tc.epochs + 1):
            chunk = (epoch - 1) % tc.encoder_passes
            f = self.features.assemble(chunk, tc.encoder_passes)
            logits = self.model(self.stacked, f)
            loss = ops.cross_entropy(logits, self.train_labels, self.train_nodes)
            train_loss = float(loss.data)
            record = {"epoch": epoch, "train_loss": train_loss,
                      "train_acc": _accuracy(logits.data, self.train_nodes, self.train_labels)}
            if monitor_valid:
                record["valid_loss"] = _loss(logits.data, self.valid_nodes, self.valid_labels)
                record["valid_acc"] = _accuracy(logits.data, self.valid_nodes, self.valid_labels)
            if not math.isfinite(train_loss):
                raise TrainingError(self._diagnostics(epoch))
            history.append(record)
            if on_epoch is not None:
                on_epoch(record)
            monitored = record["valid_loss"] if monitor_valid else train_loss
            if stopper.update(epoch, monitored, self.state):
                stopped = epoch
                break
            opt.zero_grad()
            loss.backward()
            opt.step()
        self.load_state(stopper.best_state)
        test = self.evaluate("test")
        result = RunResult(
            history=history,
            test_accuracy=test.accuracy,
            best_epoch=stopper.best_epoch,
            stopped_epoch=stopped,
            seed=tc.seed,
            config={"model": _jsonable(asdict(self.mc)), "train": asdict(tc)},
            wall_time=time.perf_counter() - t0,
        )
        return result


def _loss(logits, nodes, labels):
    z = logits[np.asarray(nodes)]
    z = z - z.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-log_p[np.arange(len(labels)), labels].mean())


def _accuracy(logits, nodes, labels):
    pred = np.argmax(logits[np.asarray(nodes)], axis=1)
    return float((pred == np.asarray(labels)).mean())


def _jsonable(d):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def train(graph, split, model_config=None, train_config=None, on_epoch=None):
    """Train one model; returns ``(trainer, RunResult)`` with best-validation parameters loaded."""
    trainer = Trainer(graph, split, model_config or ModelConfig(), train_config or TrainConfig())
    result = trainer.fit(on_epoch)
    return trainer, result


# --------------------------------------------------------------------------
# ablation
# --------------------------------------------------------------------------

ABLATION_ROWS = [("structure", ())] + [(f"structure+{m}", (m,)) for m in MODALITY_NAMES] + \
    [("structure+all", MODALITY_NAMES)]


@dataclass
class AblationRow:
    name: str
    modalities: tuple
    accuracies: list
    absent: bool = False

    @property
    def mean(self):
        return float(np.mean(self.accuracies)) if self.accuracies else float("nan")

    @property
    def std(self):
        return float(np.std(self.accuracies)) if self.accuracies else float("nan")


def ablate(triples, split, policy="split", modalities=MODALITY_NAMES, runs=1, base_seed=0,
           model_config=None, train_config=None, jobs=1, rows=None):
    """Mean test accuracy per configuration over seeds ``base_seed .. base_seed + runs - 1``.

    Configurations are structure-only, structure plus each requested
    modality, and structure plus all requested modalities. A modality with
    no literal in the graph yields a row marked ``absent``.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    modalities = parse_modalities(modalities)
    graph = build_graph(triples, policy).add_inverse_and_identity() if not isinstance(triples, KnowledgeGraph) \
        else triples
    counts = FeatureAssembler(graph, (), np.random.default_rng(0)).literal_counts
    base_mc = model_config or ModelConfig()
    base_tc = train_config or TrainConfig()
    if rows is None:
        rows = [("structure", ())] + [(f"structure+{m}", (m,)) for m in modalities]
        if len(modalities) > 1:
            rows.append(("structure+all", modalities))
    present = tuple(m for m in modalities if counts[m] > 0)

    tasks = []
    table = []
    for name, mods in rows:
        if mods and not any(counts[m] > 0 for m in mods):
            table.append(AblationRow(name, mods, [], absent=True))
            continue
        mods = tuple(m for m in mods if m in present) if name == "structure+all" else mods
        row = AblationRow(name, mods, [])
        table.append(row)
        for k in range(runs):
            mc = ModelConfig(**{**asdict(base_mc), "modalities": mods, "policy": LiteralPolicy(policy).value})
            tc = TrainConfig(**{**asdict(base_tc), "seed": base_seed + k})
            tasks.append((row, mc, tc))

    def run(task):
        row, mc, tc = task
        _, result = train(graph, split, mc, tc)
        log.info("%s seed=%d acc=%.4f", row.name, tc.seed, result.test_accuracy)
        return result.test_accuracy

    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            accs = list(pool.map(_run_task, [(graph, split, mc, tc) for _, mc, tc in tasks]))
    else:
        accs = [run(t) for t in tasks]
    for (row, _, _), acc in zip(tasks, accs):
        row.accuracies.append(acc)
    return table


def _run_task(args):
    graph, split, mc, tc = args
    _, result = train(graph, split, mc, tc)
    return result.test_accuracy


def format_ablation(table, title=None):
    lines = [title] if title else []
    width = max(len(r.name) for r in table)
    for r in table:
        value = "absent" if r.absent else f"{r.mean:.4f} ± {r.std:.4f}"
        lines.append(f"{r.name.ljust(width)}  {value}")
    return "\n".join(lines)
