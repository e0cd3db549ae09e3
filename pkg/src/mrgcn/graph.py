"""In-memory multimodal knowledge graph.

Nodes are numbered densely: entities first (sorted by IRI), then literal
nodes in first-occurrence order. Under the merged policy literal
occurrences with the same (lexical form, datatype, language) share a node;
under the split policy every occurrence gets its own node.
"""

import enum
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .autodiff.tensor import SparseMatrix
from .rdf import Modality, TypedLiteral

IDENTITY_IRI = "urn:x-mrgcn:identity"


class GraphError(ValueError):
    pass


class NodeKind(enum.Enum):
    ENTITY = "entity"
    LITERAL = "literal"


class Direction(enum.Enum):
    FORWARD = "forward"
    INVERSE = "inverse"
    IDENTITY = "identity"


class LiteralPolicy(enum.Enum):
    MERGED = "merged"
    SPLIT = "split"


@dataclass(frozen=True)
class Node:
    kind: NodeKind
    label: str
    literal: TypedLiteral = None


@dataclass(frozen=True)
class Relation:
    iri: str
    direction: Direction = Direction.FORWARD

    def __str__(self):
        suffix = {Direction.FORWARD: "", Direction.INVERSE: "^-1", Direction.IDENTITY: ""}
        return self.iri + suffix[self.direction]


@dataclass(frozen=True)
class Triple:
    head: int
    relation: Relation
    tail: int


@dataclass(frozen=True)
class SparseAdjacency:
    """Row-normalised adjacency of one relation in coordinate form."""

    relation: Relation
    shape: tuple
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.values
        return out

    def to_sparse(self):
        return SparseMatrix.from_coo(self.rows, self.cols, self.values, self.shape)


class KnowledgeGraph:
    """Frozen graph: node table, relation table and integer triple arrays."""

    def __init__(self, nodes, relations, heads, rels, tails, policy, num_entities):
        self.nodes = tuple(nodes)
        self.relations = tuple(relations)
        self.heads = np.asarray(heads, dtype=np.int64)
        self.rels = np.asarray(rels, dtype=np.int64)
        self.tails = np.asarray(tails, dtype=np.int64)
        self.policy = policy
        self.num_entities = num_entities
        self._entity_ids = {n.label: i for i, n in enumerate(self.nodes[:num_entities])}
        self._relation_ids = {r: i for i, r in enumerate(self.relations)}
        for arr in (self.heads, self.rels, self.tails):
            arr.setflags(write=False)

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_literals(self):
        return self.num_nodes - self.num_entities

    @property
    def num_relations(self):
        return len(self.relations)

    @property
    def num_triples(self):
        return self.heads.shape[0]

    @property
    def augmented(self):
        return any(r.direction is Direction.IDENTITY for r in self.relations)

    def entity_id(self, iri):
        try:
            return self._entity_ids[iri]
        except KeyError:
            raise GraphError(f"unknown entity {iri}") from None

    def has_entity(self, iri):
        return iri in self._entity_ids

    def relation_index(self, relation):
        if isinstance(relation, (int, np.integer)):
            if not 0 <= relation < self.num_relations:
                raise GraphError(f"relation index {relation} out of range")
            return int(relation)
        try:
            return self._relation_ids[relation]
        except KeyError:
            raise GraphError(f"unknown relation {relation}") from None

    def triples(self):
        for h, r, t in zip(self.heads, self.rels, self.tails):
            yield Triple(int(h), self.relations[r], int(t))

    def literal_ids(self, modality=None):
        """Node ids of literal nodes, optionally restricted to one modality."""
        ids = range(self.num_entities, self.num_nodes)
        if modality is None:
            return np.fromiter(ids, dtype=np.int64)
        return np.array([i for i in ids if self.nodes[i].literal.modality is modality], dtype=np.int64)

    def modality_counts(self):
        counts = Counter(self.nodes[i].literal.modality for i in range(self.num_entities, self.num_nodes))
        return {m: counts.get(m, 0) for m in Modality}

    def _row_normalised(self, mask):
        heads, tails = self.heads[mask], self.tails[mask]
        deg = np.bincount(heads, minlength=self.num_nodes).astype(np.float64)
        return heads, tails, 1.0 / deg[heads]

    def adjacency(self, relation):
        """Row-normalised ``A^r``: entry (i, j) = 1/deg_r(i) for each edge i -r-> j."""
        r = self.relation_index(relation)
        rows, cols, values = self._row_normalised(self.rels == r)
        n = self.num_nodes
        return SparseAdjacency(self.relations[r], (n, n), rows, cols, values)

    def adjacencies(self):
        return [self.adjacency(r) for r in range(self.num_relations)]

    def stacked_adjacency(self):
        """``[A^1 A^2 ... A^R]`` as one ``n x (R*n)`` sparse matrix."""
        n = self.num_nodes
        key = self.rels * n + self.heads
        deg = np.bincount(key, minlength=self.num_relations * n).astype(np.float64)
        values = 1.0 / deg[key]
        cols = self.rels * n + self.tails
        return SparseMatrix.from_coo(self.heads, cols, values, (n, self.num_relations * n))

    def add_inverse_and_identity(self):
        """Return a new graph with inverse twins of every forward relation and the identity."""
        if self.augmented or any(r.direction is not Direction.FORWARD for r in self.relations):
            raise GraphError("graph already contains inverse or identity relations")
        k = self.num_relations
        inverse = [Relation(r.iri, Direction.INVERSE) for r in self.relations]
        relations = list(self.relations) + inverse + [Relation(IDENTITY_IRI, Direction.IDENTITY)]
        ids = np.arange(self.num_nodes, dtype=np.int64)
        heads = np.concatenate([self.heads, self.tails, ids])
        tails = np.concatenate([self.tails, self.heads, ids])
        rels = np.concatenate([self.rels, self.rels + k, np.full(self.num_nodes, 2 * k, dtype=np.int64)])
        return KnowledgeGraph(self.nodes, relations, heads, rels, tails, self.policy, self.num_entities)

    def statistics(self):
        fwd_rel = [r for r in self.relations if r.direction is Direction.FORWARD]
        forward = np.isin(self.rels, [self._relation_ids[r] for r in fwd_rel])
        return {
            "facts": int(forward.sum()),
            "relations": len(fwd_rel),
            "entities": self.num_entities,
            "literals": self.num_literals,
            "policy": self.policy.value,
            "modalities": {m.value: c for m, c in self.modality_counts().items()},
        }


def _check_record(index, record):
    if not isinstance(record, tuple) or len(record) != 3:
        raise GraphError(f"triple {index}: expected (subject, predicate, object), got {record!r}")
    s, p, o = record
    if not isinstance(s, str) or not s:
        raise GraphError(f"triple {index}: subject must be an IRI or blank node, got {s!r}")
    if not isinstance(p, str) or not p or p.startswith("_:"):
        raise GraphError(f"triple {index}: predicate must be an IRI, got {p!r}")
    if not isinstance(o, (str, TypedLiteral)) or (isinstance(o, str) and not o):
        raise GraphError(f"triple {index}: object must be an IRI, blank node or literal, got {o!r}")
    if isinstance(o, TypedLiteral) and not o.datatype:
        raise GraphError(f"triple {index}: literal without datatype")


def build_graph(triples, policy=LiteralPolicy.MERGED):
    """Index raw ``(s, p, o)`` triples into a frozen :class:`KnowledgeGraph`.

    Identical raw triples are stored once.
    """
    policy = LiteralPolicy(policy)
    unique = []
    seen = set()
    for index, record in enumerate(triples):
        record = tuple(record) if isinstance(record, list) else record
        _check_record(index, record)
        if record not in seen:
            seen.add(record)
            unique.append(record)
    if not unique:
        raise GraphError("cannot build a graph from zero triples")

    entity_iris = sorted({s for s, _, _ in unique} | {o for _, _, o in unique if isinstance(o, str)})
    entity_ids = {iri: i for i, iri in enumerate(entity_iris)}
    nodes = [Node(NodeKind.ENTITY, iri) for iri in entity_iris]

    relation_iris = sorted({p for _, p, _ in unique})
    relation_ids = {iri: i for i, iri in enumerate(relation_iris)}

    merged = {}
    heads, rels, tails = [], [], []
    for s, p, o in unique:
        if isinstance(o, TypedLiteral):
            if policy is LiteralPolicy.MERGED and o.key in merged:
                tail = merged[o.key]
            else:
                tail = len(nodes)
                nodes.append(Node(NodeKind.LITERAL, o.lexical, o))
                merged[o.key] = tail
        else:
            tail = entity_ids[o]
        heads.append(entity_ids[s])
        rels.append(relation_ids[p])
        tails.append(tail)

    relations = [Relation(iri) for iri in relation_iris]
    return KnowledgeGraph(nodes, relations, heads, rels, tails, policy, len(entity_iris))
