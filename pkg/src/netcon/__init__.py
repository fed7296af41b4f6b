"""Network constructors under crash faults: simulator, protocol library, verifier."""
from .core import (Configuration, OutputGraph, ProtocolDefinition, ProtocolError, UsageError,
                   apply_pairwise, crash, output_graph, parse_rules)
from .protocols import PartitionParams, get_protocol

__all__ = ["Configuration", "OutputGraph", "ProtocolDefinition", "ProtocolError", "UsageError",
           "apply_pairwise", "crash", "output_graph", "parse_rules", "PartitionParams",
           "get_protocol"]
__version__ = "0.1.0"
