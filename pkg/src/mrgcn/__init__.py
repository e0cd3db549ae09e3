"""Multimodal relational graph convolutional networks for node classification."""

from .graph import KnowledgeGraph, LiteralPolicy, build_graph
from .model import MRGCN
from .rdf import TypedLiteral, load_split, parse_ntriples, read_ntriples
from .trainer import ModelConfig, TrainConfig, ablate, train

__version__ = "0.1.0"

__all__ = [
    "KnowledgeGraph", "LiteralPolicy", "MRGCN", "ModelConfig", "TrainConfig", "TypedLiteral",
    "ablate", "build_graph", "load_split", "parse_ntriples", "read_ntriples", "train",
]
