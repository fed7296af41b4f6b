"""Turing machines and the universal constructors that simulate them."""
from .tm import (SHIPPED, SimulationError, TMDescription, adjacency_bits, decide_graph, get_tm,
                 load_tm, parse_tm)
from .universal import (LineContext, UniversalProtocol, UniversalRun, build_universal,
                        direction_pass, draw_random_graph_on_D, make_structure, read_edge,
                        read_mem_edge, run_universal, write_mem_edge)

__all__ = ["SHIPPED", "SimulationError", "TMDescription", "adjacency_bits", "decide_graph",
           "get_tm", "load_tm", "parse_tm", "LineContext", "UniversalProtocol", "UniversalRun",
           "build_universal", "direction_pass", "draw_random_graph_on_D", "make_structure",
           "read_edge", "read_mem_edge", "run_universal", "write_mem_edge"]
