import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrgcn.graph import Direction, GraphError, LiteralPolicy, NodeKind, Relation, build_graph
from mrgcn.rdf import RDF_LANGSTRING, XSD, TypedLiteral

EX = "http://example.org/"
INT, DATE = XSD + "integer", XSD + "date"


def twelve_triples():
    """4 entities, 4 entity links and 8 literal occurrences of which 3 values appear twice."""
    e = [EX + f"e{i}" for i in range(1, 5)]
    return [
        (e[0], EX + "knows", e[1]),
        (e[1], EX + "knows", e[2]),
        (e[2], EX + "knows", e[3]),
        (e[3], EX + "knows", e[0]),
        (e[0], EX + "age", TypedLiteral("5", INT)),
        (e[1], EX + "age", TypedLiteral("5", INT)),
        (e[2], EX + "age", TypedLiteral("7", INT)),
        (e[0], EX + "colour", TypedLiteral("red")),
        (e[3], EX + "colour", TypedLiteral("red")),
        (e[1], EX + "colour", TypedLiteral("blue")),
        (e[2], EX + "born", TypedLiteral("2020-01-01", DATE)),
        (e[3], EX + "born", TypedLiteral("2020-01-01", DATE)),
    ]


def test_policy_node_counts():
    triples = twelve_triples()
    assert len(triples) == 12
    merged, split = build_graph(triples, "merged"), build_graph(triples, "split")
    # distinct literal values: "5", "7", "red", "blue", "2020-01-01"
    assert (merged.num_entities, merged.num_literals, merged.num_nodes) == (4, 5, 9)
    assert (split.num_entities, split.num_literals, split.num_nodes) == (4, 8, 12)
    assert merged.num_triples == split.num_triples == 12


def test_augmented_relation_count():
    g = build_graph(twelve_triples(), "split")
    assert g.num_relations == 4
    aug = g.add_inverse_and_identity()
    assert aug.num_relations == 2 * 4 + 1
    kinds = [r.direction for r in aug.relations]
    assert kinds.count(Direction.FORWARD) == kinds.count(Direction.INVERSE) == 4
    assert kinds.count(Direction.IDENTITY) == 1


def test_forty_five_relations_become_ninety_one():
    triples = [(EX + "a", EX + f"p{i}", EX + "b") for i in range(45)]
    assert build_graph(triples).add_inverse_and_identity().num_relations == 91


def test_merged_example_counts():
    triples = [(EX + "a", EX + "p", TypedLiteral("5", INT)), (EX + "b", EX + "p", TypedLiteral("5", INT))]
    assert build_graph(triples, LiteralPolicy.MERGED).num_nodes == 3
    assert build_graph(triples, LiteralPolicy.SPLIT).num_nodes == 4


def test_empty_graph_rejected():
    with pytest.raises(GraphError):
        build_graph([])


@pytest.mark.parametrize("record", [("a", "p"), ("a", "_:p", "b"), ("", "p", "b"), ("a", "p", 5),
                                    ("a", "p", TypedLiteral("x", ""))])
def test_malformed_records_rejected(record):
    with pytest.raises(GraphError, match="triple 1"):
        build_graph([("a", "p", "b"), record])


def test_lexical_not_value_equality():
    triples = [(EX + "a", EX + "p", TypedLiteral("5", INT)), (EX + "b", EX + "p", TypedLiteral("05", INT))]
    assert build_graph(triples, "merged").num_literals == 2


def test_language_tag_is_part_of_identity():
    triples = [(EX + "a", EX + "p", TypedLiteral("hi", RDF_LANGSTRING, "en")),
               (EX + "b", EX + "p", TypedLiteral("hi", RDF_LANGSTRING, "fr")),
               (EX + "c", EX + "p", TypedLiteral("hi"))]
    assert build_graph(triples, "merged").num_literals == 3


def test_identical_triples_stored_once():
    t = (EX + "a", EX + "p", TypedLiteral("x"))
    g = build_graph([t, t], "split")
    assert g.num_triples == 1 and g.num_literals == 1


def test_node_ordering():
    g = build_graph([(EX + "z", EX + "p", TypedLiteral("first")), (EX + "a", EX + "p", EX + "m"),
                     (EX + "a", EX + "q", TypedLiteral("second"))], "split")
    assert [n.label for n in g.nodes] == [EX + "a", EX + "m", EX + "z", "first", "second"]
    assert [n.kind for n in g.nodes] == [NodeKind.ENTITY] * 3 + [NodeKind.LITERAL] * 2
    assert all((n.literal is None) == (n.kind is NodeKind.ENTITY) for n in g.nodes)


def test_two_out_edges_half_weight_and_zero_rows():
    g = build_graph([(EX + "a", EX + "p", EX + "b"), (EX + "a", EX + "p", EX + "c")])
    dense = g.adjacency(Relation(EX + "p")).to_dense()
    a, b, c = (g.entity_id(EX + x) for x in "abc")
    assert dense[a, b] == dense[a, c] == 0.5
    np.testing.assert_array_equal(dense[b], 0.0)


def test_chain_adjacency():
    g = build_graph([(EX + "a", EX + "r", EX + "b"), (EX + "b", EX + "r", EX + "c")])
    np.testing.assert_array_equal(g.adjacency(0).to_dense(), [[0, 1, 0], [0, 0, 1], [0, 0, 0]])


def test_inverse_and_identity_adjacency():
    g = build_graph([(EX + "a", EX + "p", EX + "b"), (EX + "c", EX + "q", EX + "d")]).add_inverse_and_identity()
    inv = g.adjacency(Relation(EX + "p", Direction.INVERSE)).to_dense()
    assert inv[g.entity_id(EX + "b"), g.entity_id(EX + "a")] == 1.0
    assert inv.sum() == 1.0
    np.testing.assert_array_equal(g.adjacency(g.num_relations - 1).to_dense(), np.eye(4))


def test_unknown_relation_lookup():
    g = build_graph([(EX + "a", EX + "p", EX + "b")])
    with pytest.raises(GraphError):
        g.adjacency(Relation(EX + "nope"))
    with pytest.raises(GraphError):
        g.adjacency(5)


def test_double_augmentation_rejected():
    g = build_graph([(EX + "a", EX + "p", EX + "b")]).add_inverse_and_identity()
    with pytest.raises(GraphError):
        g.add_inverse_and_identity()


def test_stacked_adjacency_matches_blocks():
    g = build_graph(twelve_triples(), "split").add_inverse_and_identity()
    stacked = g.stacked_adjacency().to_dense()
    n = g.num_nodes
    for r, a in enumerate(g.adjacencies()):
        np.testing.assert_array_equal(stacked[:, r * n:(r + 1) * n], a.to_dense())


def test_statistics():
    stats = build_graph(twelve_triples(), "merged").add_inverse_and_identity().statistics()
    assert stats["facts"] == 12 and stats["relations"] == 4
    assert stats["entities"] == 4 and stats["literals"] == 5


# --------------------------------------------------------------------------
# properties over random graphs
# --------------------------------------------------------------------------

_term = st.sampled_from([EX + f"n{i}" for i in range(6)])
_value = st.builds(TypedLiteral, st.sampled_from(["1", "2", "x", "y"]), st.sampled_from([INT, XSD + "string"]))
_triples = st.lists(st.tuples(_term, st.sampled_from([EX + "p", EX + "q", EX + "r"]), st.one_of(_term, _value)),
                    min_size=1, max_size=25)


@settings(max_examples=150, deadline=None)
@given(_triples)
def test_graph_invariants(triples):
    merged, split = build_graph(triples, "merged"), build_graph(triples, "split")
    assert split.num_nodes >= merged.num_nodes
    literal_keys = [o.key for _, _, o in set(triples) if isinstance(o, TypedLiteral)]
    assert (split.num_nodes == merged.num_nodes) == (len(literal_keys) == len(set(literal_keys)))

    aug = split.add_inverse_and_identity()
    k = split.num_relations
    dense = [a.to_dense() for a in aug.adjacencies()]
    for a in dense:
        sums = a.sum(axis=1)
        assert np.all((np.abs(sums) < 1e-9) | (np.abs(sums - 1.0) < 1e-9))
    for r in range(k):
        assert np.array_equal(dense[r] != 0, (dense[r + k] != 0).T)
    assert all(split.nodes[h].kind is NodeKind.ENTITY for h in split.heads)

    again = build_graph(list(triples), "split")
    assert again.nodes == split.nodes and again.relations == split.relations
    assert np.array_equal(again.heads, split.heads) and np.array_equal(again.tails, split.tails)
