"""Repair toolkit for stable matching instances.

Four families of repairs are covered:

* stable partitions and minimum agent deletion (``partition``),
* minimum-L1 preference modification making a given q-matching weakly
  stable, exactly in bipartite instances and 2-approximately in general
  (``bribery``),
* completion of partially fixed rank lists so a given q-matching becomes
  stable, with optional rank lower bounds (``extension``),
* brute-force oracles and reduction-gadget generators that certify every
  solver at desk scale (``oracle``).

The ``matchrepair`` command line tool exposes all of them on a line-oriented
instance file format; see the README for the format and examples.
"""

from .core import (
    TOLERANCE,
    Edge,
    Instance,
    InstanceError,
    ParseError,
    ParsedFile,
    QMatching,
    Ranks,
    StrictOrders,
    Values,
    blocking_edges,
    format_instance,
    induced_instance,
    is_maximal,
    is_stable,
    make_edge,
    parse_instance,
)
from .partition import (
    DeletionResult,
    StablePartition,
    min_removable_set,
    stable_partition,
    subset_removable,
    verify_partition,
)

__all__ = [
    "TOLERANCE",
    "Edge",
    "Instance",
    "InstanceError",
    "ParseError",
    "ParsedFile",
    "QMatching",
    "Ranks",
    "StrictOrders",
    "Values",
    "blocking_edges",
    "format_instance",
    "induced_instance",
    "is_maximal",
    "is_stable",
    "make_edge",
    "parse_instance",
    "DeletionResult",
    "StablePartition",
    "min_removable_set",
    "stable_partition",
    "subset_removable",
    "verify_partition",
]
