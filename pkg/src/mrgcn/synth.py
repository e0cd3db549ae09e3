"""Synthetic multimodal benchmark graphs with a planted binary signal.

A Watts-Strogatz small world provides the structure. A random subset of
entities carries the label; their literals come from two narrow
class-specific distributions, every other entity draws literals uniformly
from each modality's value space.
"""

import json
import math
import string
from dataclasses import asdict, dataclass

import numpy as np

from .literals import encode_png
from .rdf import WKT_LITERAL, XSD, LabeledSplit, TypedLiteral, write_ntriples, write_split

NS = "http://example.org/synth/"
LINK = NS + "linkedTo"
ATTRIBUTES = {
    "num": NS + "hasNumber",
    "tmp": NS + "hasDate",
    "txt": NS + "hasDescription",
    "img": NS + "hasImage",
    "geo": NS + "hasGeometry",
}
SPLIT_SIZES = {"train": 70, "valid": 29, "test": 29}  # per class: 140/58/58 for 256 labels

TEXT_MOTIFS = ("qvx", "zjk")
TEXT_BACKGROUND = "".join(ch for ch in string.ascii_lowercase + "    " if ch not in "qvxzjk")
WORLD = ((3.0, 7.0), (50.5, 53.5))  # lon, lat box for geometries


@dataclass
class SynthConfig:
    nodes: int = 4096
    neighbors: int = 4
    rewire: float = 0.1
    signal_entities: int = 256
    attribute_probability: float = 0.9
    separation: float = 1.0
    image_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.signal_entities > self.nodes:
            raise ValueError("signal_entities cannot exceed the number of nodes")
        if self.signal_entities % 2:
            raise ValueError("signal_entities must be even (two balanced classes)")
        if not 0.0 <= self.attribute_probability <= 1.0:
            raise ValueError("attribute_probability must lie in [0, 1]")
        if self.separation <= 0:
            raise ValueError("separation must be positive")


def watts_strogatz(n, k, beta, seed):
    """Undirected small-world edge list ``[(u, v), ...]`` sorted, ``u < v``.

    Ring lattice where each node links to its ``k`` nearest neighbours; each
    lattice edge ``(u, u + j)`` is then rewired with probability ``beta`` to a
    uniformly chosen target, avoiding self-loops and duplicate edges.
    """
    if k < 2 or k % 2:
        raise ValueError(f"k must be an even number >= 2, got {k}")
    if n <= k:
        raise ValueError(f"need n > k, got n={n}, k={k}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    adj = [set() for _ in range(n)]
    for u in range(n):
        for j in range(1, k // 2 + 1):
            v = (u + j) % n
            adj[u].add(v)
            adj[v].add(u)
    for j in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + j) % n
            if v not in adj[u] or rng.random() >= beta:
                continue
            if len(adj[u]) >= n - 1:
                continue
            w = int(rng.integers(n))
            while w == u or w in adj[u]:
                w = int(rng.integers(n))
            adj[u].discard(v)
            adj[v].discard(u)
            adj[u].add(w)
            adj[w].add(u)
    return sorted((u, v) for u in range(n) for v in adj[u] if u < v)


# --------------------------------------------------------------------------
# per-modality value samplers
# --------------------------------------------------------------------------


def _number(rng, label, sep):
    if label is None:
        value = int(rng.integers(-500, 501))
    else:
        centre = (-150.0 if label == 0 else 150.0) * sep
        value = int(round(rng.normal(centre, 10.0)))
    return TypedLiteral(str(value), XSD + "integer")


def _date(rng, label, sep):
    if label is None:
        year = int(rng.integers(1000, 2021))
    else:
        centre = 1850 + (-60 if label == 0 else 60) * sep
        year = int(round(rng.normal(centre, 3.0)))
    month = int(rng.integers(1, 13))
    day = int(rng.integers(1, 29))
    return TypedLiteral(f"{year:04d}-{month:02d}-{day:02d}", XSD + "date")


def _text(rng, label, sep):
    length = int(rng.integers(24, 41))
    if label is not None:
        # narrower class distribution: less random background per motif
        length = max(4, round(length / sep))
    chars = list(rng.choice(list(TEXT_BACKGROUND), size=length))
    if label is not None:
        motif = TEXT_MOTIFS[label]
        for _ in range(max(1, round(2 * sep * sep))):
            pos = int(rng.integers(0, len(chars) + 1))
            chars[pos:pos] = list(motif)
    return TypedLiteral(" ".join("".join(chars).split()) or "a")


def _image(rng, label, sep, size):
    if label is None:
        block = max(1, size // 8)
        field = rng.random((3, 8, 8))
        raster = np.kron(field, np.ones((block, block)))[:, :size, :size]
    else:
        coords = np.arange(size)
        stripes = ((coords // 4) % 2).astype(np.float64)
        pattern = np.tile(stripes[:, None], (1, size)) if label == 0 else np.tile(stripes[None, :], (size, 1))
        colour = np.array([0.75, 0.35, 0.35]) if label == 0 else np.array([0.35, 0.35, 0.75])
        base = 0.5 + (colour[:, None, None] - 0.5) * min(sep, 2.0) * pattern[None]
        noise = rng.normal(0.0, 0.15 / sep, size=(3, size, size))
        raster = np.clip(base + noise, 0.0, 1.0)
    return TypedLiteral(encode_png(raster), XSD + "base64Binary")


def _polygon(centre, radius, vertices, rotation):
    angles = rotation + 2 * math.pi * np.arange(vertices) / vertices
    pts = [(centre[0] + radius * math.cos(a), centre[1] + radius * math.sin(a)) for a in angles]
    pts.append(pts[0])
    body = ", ".join(f"{x:.5f} {y:.5f}" for x, y in pts)
    return f"POLYGON (({body}))"


def _geometry(rng, label, sep):
    (x0, x1), (y0, y1) = WORLD
    if label is None:
        centre = (rng.uniform(x0, x1), rng.uniform(y0, y1))
        wkt = _polygon(centre, rng.uniform(0.01, 0.1), int(rng.integers(3, 9)), rng.uniform(0, 2 * math.pi))
    else:
        mid = ((x0 + x1) / 2, (y0 + y1) / 2)
        offset = 0.6 * min(sep, 2.0) * (-1 if label == 0 else 1)
        centre = (mid[0] + offset + rng.normal(0, 0.05), mid[1] + rng.normal(0, 0.05))
        vertices = 3 if label == 0 else 6
        wkt = _polygon(centre, rng.uniform(0.04, 0.06), vertices, rng.uniform(0, 2 * math.pi))
    return TypedLiteral(wkt, WKT_LITERAL)


def _entity(i, width):
    return f"{NS}entity/{i:0{width}d}"


# --------------------------------------------------------------------------
# generation
# --------------------------------------------------------------------------


@dataclass
class SynthData:
    triples: list
    split: LabeledSplit
    meta: dict


def plant_signal(edges, config):
    """Attach literals to every entity and label the signal subset.

    Returns :class:`SynthData`; triples are ordered structure first, then
    attributes per entity in modality order.
    """
    rng = np.random.default_rng([config.seed, 1])
    n, sep = config.nodes, config.separation
    width = len(str(n - 1))
    signal = rng.permutation(n)[:config.signal_entities]
    labels = {}
    half = config.signal_entities // 2
    for pos, node in enumerate(signal):
        labels[int(node)] = 0 if pos < half else 1

    triples = [(_entity(u, width), LINK, _entity(v, width)) for u, v in edges]
    samplers = {
        "num": lambda lab: _number(rng, lab, sep),
        "tmp": lambda lab: _date(rng, lab, sep),
        "txt": lambda lab: _text(rng, lab, sep),
        "img": lambda lab: _image(rng, lab, sep, config.image_size),
        "geo": lambda lab: _geometry(rng, lab, sep),
    }
    counts = {m: 0 for m in ATTRIBUTES}
    signal_counts = {m: 0 for m in ATTRIBUTES}
    for node in range(n):
        label = labels.get(node)
        for name, predicate in ATTRIBUTES.items():
            # the draw happens for every entity so p only gates inclusion
            keep = rng.random() < config.attribute_probability
            literal = samplers[name](label)
            if keep:
                triples.append((_entity(node, width), predicate, literal))
                counts[name] += 1
                if label is not None:
                    signal_counts[name] += 1

    parts = {name: [] for name in SPLIT_SIZES}
    for cls in (0, 1):
        members = [node for node in signal if labels[int(node)] == cls]
        members = [members[i] for i in rng.permutation(len(members))]
        sizes = _partition_sizes(len(members))
        start = 0
        for name in ("train", "valid", "test"):
            for node in members[start:start + sizes[name]]:
                parts[name].append((_entity(int(node), width), str(cls)))
            start += sizes[name]
    for rows in parts.values():
        rows.sort()
    split = LabeledSplit(parts["train"], parts["valid"], parts["test"], ("0", "1"))

    literal_keys = {t[2].key for t in triples if isinstance(t[2], TypedLiteral)}
    structure_entities = {t[0] for t in triples} | {t[2] for t in triples if isinstance(t[2], str)}
    meta = {
        "config": asdict(config),
        "entities": len(structure_entities),
        "structure_facts": len(edges),
        "attribute_facts": sum(counts.values()),
        "facts": len(triples),
        "literals_split": sum(counts.values()),
        "literals_merged": len(literal_keys),
        "literals_per_modality": counts,
        "signal_literals_per_modality": signal_counts,
        "labels": {"0": half, "1": config.signal_entities - half},
        "split_sizes": {name: len(rows) for name, rows in parts.items()},
        "split_scheme": "stratified per class, 70/29/29 of 128 (140/58/58 for 256 labels)",
    }
    return SynthData(triples, split, meta)


def _partition_sizes(count):
    if count == 128:
        return dict(SPLIT_SIZES)
    valid = test = round(count * 29 / 128)
    return {"train": count - valid - test, "valid": valid, "test": test}


def generate(config):
    edges = watts_strogatz(config.nodes, config.neighbors, config.rewire, seed=[config.seed, 0])
    return plant_signal(edges, config)


def write_dataset(data, out_dir):
    """Write ``graph.nt``, ``split.tsv`` and ``meta.json`` into ``out_dir``."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name) for name in ("graph.nt", "split.tsv", "meta.json")}
    write_ntriples(paths["graph.nt"], data.triples)
    write_split(paths["split.tsv"], data.split)
    with open(paths["meta.json"], "w", encoding="utf-8") as fh:
        json.dump(data.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
