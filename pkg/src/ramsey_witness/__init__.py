"""Witness construction for many distinct induced-subgraph edge counts."""

from .errors import CapacityError, InputError, PreconditionError, StageFailure
from .graph import (Graph, KTuple, MultiSetNbhd, VertexSet, build_graph, common_neighborhood,
                    complete_graph, cross_edges, degree_into, empty_graph, gnp_half,
                    induced_edges, multiset_sym_diff_size, read_graph, tuple_degree_into,
                    tuple_nbhd, write_graph)
from .tracker import SwitchTracker

__all__ = [
    "CapacityError", "InputError", "PreconditionError", "StageFailure",
    "Graph", "KTuple", "MultiSetNbhd", "VertexSet", "SwitchTracker",
    "build_graph", "common_neighborhood", "complete_graph", "cross_edges", "degree_into",
    "empty_graph", "gnp_half", "induced_edges", "multiset_sym_diff_size", "read_graph",
    "tuple_degree_into", "tuple_nbhd", "write_graph",
]
