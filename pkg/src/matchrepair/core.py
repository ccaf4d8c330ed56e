"""Instance model, parsing, and the stability predicates shared by every solver.

An instance is an undirected simple graph on named agents, per-agent
capacities, and one of three preference encodings:

* ``Values``: every (agent, incident edge) pair carries a nonnegative real;
  ties are allowed and strictness is tolerance-based.
* ``StrictOrders``: every agent ranks its neighbourhood by a strict total
  order.
* ``Ranks``: a partial map from (agent, incident edge) to an integer position
  counted from the worst (1 = worst, deg = best).

Edges are stored canonically as ``(min_id, max_id)`` with lexicographic id
order, and every reported edge list is sorted, so that identical inputs give
byte-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

__all__ = [
    "TOLERANCE",
    "Edge",
    "ParseError",
    "InstanceError",
    "Values",
    "StrictOrders",
    "Ranks",
    "Instance",
    "QMatching",
    "ParsedFile",
    "make_edge",
    "parse_instance",
    "blocking_edges",
    "is_stable",
    "is_maximal",
    "induced_instance",
    "format_instance",
]

#: Strictness tolerance under real-valued preferences: ``a`` is strictly
#: preferred to ``b`` iff ``value(a) > value(b) + TOLERANCE``.
TOLERANCE = 1e-9

Edge = tuple[str, str]


class ParseError(ValueError):
    """Raised on malformed instance files; the message carries the line."""


class InstanceError(ValueError):
    """Raised when data breaks an instance invariant or a solver contract."""


def make_edge(u: str, v: str) -> Edge:
    """Canonical unordered pair (lexicographically smaller id first)."""
    if u == v:
        raise InstanceError(f"loop edge at {u!r}")
    return (u, v) if u < v else (v, u)


def other_end(e: Edge, v: str) -> str:
    if e[0] == v:
        return e[1]
    if e[1] == v:
        return e[0]
    raise InstanceError(f"{v!r} is not an endpoint of {e!r}")


@dataclass(frozen=True)
class Values:
    """Cardinal preferences: ``p[(v, e)]`` for every incident pair."""

    p: Mapping[tuple[str, Edge], float]

    def value(self, v: str, e: Edge) -> float:
        return self.p[(v, e)]


@dataclass(frozen=True)
class StrictOrders:
    """Strict total orders, best neighbour first.

    May be partial over agents (used by the fixed-preference extension
    problems); predicates that need totality validate it at the call site.
    """

    order: Mapping[str, tuple[str, ...]]
    _pos: dict[tuple[str, str], int] = field(
        default_factory=dict, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        for v, lst in self.order.items():
            if len(set(lst)) != len(lst):
                raise InstanceError(f"duplicate entry in order of {v!r}")
            if v in lst:
                raise InstanceError(f"{v!r} lists itself")
            for i, u in enumerate(lst):
                self._pos[(v, u)] = i

    def position(self, v: str, u: str) -> int:
        """0-based position of ``u`` on ``v``'s list (0 = best)."""
        return self._pos[(v, u)]

    def prefers(self, v: str, a: str, b: str) -> bool:
        """True iff ``v`` strictly prefers ``a`` to ``b``."""
        return self._pos[(v, a)] < self._pos[(v, b)]


@dataclass(frozen=True)
class Ranks:
    """Partial positions-from-worst: ``r[(v, e)]`` in ``[1, deg(v)]``."""

    r: Mapping[tuple[str, Edge], int]


@dataclass
class Instance:
    """A capacitated preference-system instance.

    ``agents`` keeps file order for faithful re-emission; algorithms order
    agents lexicographically so relabelled inputs behave identically.
    """

    agents: tuple[str, ...]
    edges: tuple[Edge, ...]
    capacity: dict[str, int]
    values: Values | None = None
    orders: StrictOrders | None = None
    ranks: Ranks | None = None

    def __post_init__(self) -> None:
        agent_set = set(self.agents)
        if len(agent_set) != len(self.agents):
            raise InstanceError("duplicate agent id")
        seen: set[Edge] = set()
        adj: dict[str, list[str]] = {a: [] for a in self.agents}
        for e in self.edges:
            if e != make_edge(*e):
                raise InstanceError(f"edge {e!r} is not canonical")
            if e in seen:
                raise InstanceError(f"duplicate edge {e[0]} {e[1]}")
            seen.add(e)
            for x in e:
                if x not in agent_set:
                    raise InstanceError(f"unknown agent {x!r} in edge")
            adj[e[0]].append(e[1])
            adj[e[1]].append(e[0])
        self.edges = tuple(sorted(seen))
        for a in self.agents:
            q = self.capacity.get(a)
            if q is None or q < 1:
                raise InstanceError(f"capacity of {a!r} must be >= 1")
        self._adj = {a: tuple(sorted(ns)) for a, ns in adj.items()}
        self._edge_set = seen

    def neighbors(self, v: str) -> tuple[str, ...]:
        return self._adj[v]

    def degree(self, v: str) -> int:
        return len(self._adj[v])

    def has_edge(self, u: str, v: str) -> bool:
        return make_edge(u, v) in self._edge_set

    def incident(self, v: str) -> tuple[Edge, ...]:
        return tuple(make_edge(v, u) for u in self._adj[v])

    # -- convenience constructors -------------------------------------------

    @staticmethod
    def from_orders(
        order: Mapping[str, Sequence[str]],
        capacity: Mapping[str, int] | None = None,
    ) -> "Instance":
        """Build an instance whose edges are exactly the listed pairs.

        Every listed pair must appear on both endpoints' lists.
        """
        agents = tuple(order)
        edges = sorted({make_edge(v, u) for v, lst in order.items() for u in lst})
        for a, b in edges:
            if b not in order.get(a, ()) or a not in order.get(b, ()):
                raise InstanceError(f"pair {a} {b} is not listed mutually")
        caps = {a: 1 for a in agents}
        if capacity:
            caps.update(capacity)
        return Instance(
            agents,
            tuple(edges),
            caps,
            orders=StrictOrders({v: tuple(lst) for v, lst in order.items()}),
        )

    @staticmethod
    def from_values(
        val: Mapping[str, Mapping[str, float]],
        capacity: Mapping[str, int] | None = None,
    ) -> "Instance":
        """Build an instance from per-agent ``{neighbor: value}`` maps."""
        agents = tuple(val)
        edges = sorted({make_edge(v, u) for v, m in val.items() for u in m})
        p: dict[tuple[str, Edge], float] = {}
        for a, b in edges:
            for x, y in ((a, b), (b, a)):
                if y not in val.get(x, {}):
                    raise InstanceError(f"missing value of {x} for {y}")
                p[(x, (a, b))] = float(val[x][y])
        caps = {a: 1 for a in agents}
        if capacity:
            caps.update(capacity)
        return Instance(agents, tuple(edges), caps, values=Values(p))


@dataclass(frozen=True)
class QMatching:
    """An edge set with per-vertex degree at most the vertex capacity."""

    edges: tuple[Edge, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", tuple(sorted(set(self.edges))))

    def at(self, v: str) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if v in e)

    def degree(self, v: str) -> int:
        return sum(1 for e in self.edges if v in e)

    def __contains__(self, e: Edge) -> bool:
        return e in self.edges


def check_q_matching(inst: Instance, m: QMatching) -> None:
    """Raise ``InstanceError`` unless ``m`` is a q-matching of ``inst``."""
    deg: dict[str, int] = {}
    for e in m.edges:
        if e not in inst._edge_set:
            raise InstanceError(f"matching edge {e[0]} {e[1]} is not an edge")
        deg[e[0]] = deg.get(e[0], 0) + 1
        deg[e[1]] = deg.get(e[1], 0) + 1
    for v, d in deg.items():
        if d > inst.capacity[v]:
            raise InstanceError(f"capacity of {v!r} exceeded by matching")


def _require_total_prefs(inst: Instance) -> None:
    if inst.values is not None:
        for v in inst.agents:
            for e in inst.incident(v):
                if (v, e) not in inst.values.p:
                    raise InstanceError(f"missing value of {v} for edge {e}")
        return
    if inst.orders is not None:
        for v in inst.agents:
            lst = inst.orders.order.get(v)
            if lst is None and inst.degree(v) > 0:
                raise InstanceError(f"missing preference order for {v!r}")
            if lst is not None and set(lst) != set(inst.neighbors(v)):
                raise InstanceError(f"order of {v!r} is not total on its neighbours")
        return
    raise InstanceError("instance carries neither values nor strict orders")


def _strictly_prefers(inst: Instance, v: str, cand: Edge, over: Edge) -> bool:
    """Does ``v`` strictly prefer edge ``cand`` to edge ``over``?"""
    if inst.values is not None:
        return inst.values.value(v, cand) > inst.values.value(v, over) + TOLERANCE
    assert inst.orders is not None
    return inst.orders.prefers(v, other_end(cand, v), other_end(over, v))


def blocking_edges(inst: Instance, m: QMatching) -> list[Edge]:
    """All edges that (strongly) block the q-matching ``m``.

    An edge ``uv`` outside ``m`` blocks iff each endpoint is either
    unsaturated or strictly prefers the edge to at least one of its current
    matching edges.  Under ``Values`` strictness means a value gap above
    ``TOLERANCE``, which makes this the weak-stability notion; under
    ``StrictOrders`` strictness is exact.
    """
    _require_total_prefs(inst)
    check_q_matching(inst, m)
    matched: dict[str, list[Edge]] = {a: [] for a in inst.agents}
    for e in m.edges:
        matched[e[0]].append(e)
        matched[e[1]].append(e)

    def improves(x: str, e: Edge) -> bool:
        if len(matched[x]) < inst.capacity[x]:
            return True
        return any(_strictly_prefers(inst, x, e, f) for f in matched[x])

    out = []
    mset = set(m.edges)
    for e in inst.edges:
        if e in mset:
            continue
        if improves(e[0], e) and improves(e[1], e):
            out.append(e)
    return out


def is_stable(inst: Instance, m: QMatching) -> tuple[bool, Edge | None]:
    """Whether ``m`` is stable; on failure returns one blocking edge."""
    bad = blocking_edges(inst, m)
    if bad:
        return False, bad[0]
    return True, None


def is_maximal(inst: Instance, m: QMatching) -> bool:
    """True iff no edge outside ``m`` has two unsaturated endpoints."""
    check_q_matching(inst, m)
    deg: dict[str, int] = {}
    for e in m.edges:
        deg[e[0]] = deg.get(e[0], 0) + 1
        deg[e[1]] = deg.get(e[1], 0) + 1
    mset = set(m.edges)
    for u, v in inst.edges:
        if (u, v) in mset:
            continue
        if deg.get(u, 0) < inst.capacity[u] and deg.get(v, 0) < inst.capacity[v]:
            return False
    return True


def induced_instance(inst: Instance, keep: Iterable[str]) -> Instance:
    """The subinstance on ``keep``; preferences restricted accordingly."""
    kept = set(keep)
    unknown = kept - set(inst.agents)
    if unknown:
        raise InstanceError(f"unknown agents {sorted(unknown)!r}")
    agents = tuple(a for a in inst.agents if a in kept)
    edges = tuple(e for e in inst.edges if e[0] in kept and e[1] in kept)
    values = None
    orders = None
    ranks = None
    if inst.values is not None:
        values = Values(
            {
                (v, e): x
                for (v, e), x in inst.values.p.items()
                if v in kept and e[0] in kept and e[1] in kept
            }
        )
    if inst.orders is not None:
        orders = StrictOrders(
            {
                v: tuple(u for u in lst if u in kept)
                for v, lst in inst.orders.order.items()
                if v in kept
            }
        )
    if inst.ranks is not None:
        ranks = Ranks(
            {
                (v, e): r
                for (v, e), r in inst.ranks.r.items()
                if v in kept and e[0] in kept and e[1] in kept
            }
        )
    caps = {a: inst.capacity[a] for a in agents}
    return Instance(agents, edges, caps, values=values, orders=orders, ranks=ranks)


# ---------------------------------------------------------------------------
# Instance file format
# ---------------------------------------------------------------------------

_SECTIONS = (
    "agents",
    "edges",
    "values",
    "orders",
    "ranks",
    "matching",
    "bounds",
    "weights",
    "subset",
    "colors",
)


@dataclass
class ParsedFile:
    """Everything an instance file can carry.

    ``bounds`` maps ``(agent, edge)`` to ``(lower, upper)``; ``upper`` is
    ``None`` for rank lower bounds.  ``colors`` maps edges to ``'r'``/``'b'``.
    """

    instance: Instance
    matching: QMatching | None = None
    bounds: dict[tuple[str, Edge], tuple[float, float | None]] = field(
        default_factory=dict
    )
    weights: dict[str, float] = field(default_factory=dict)
    subset: tuple[str, ...] = ()
    colors: dict[Edge, str] = field(default_factory=dict)


def parse_instance(text: str) -> ParsedFile:
    """Parse the line-oriented instance format (see the package README).

    Raises ``ParseError`` with the offending line number on malformed input
    and ``InstanceError`` when the data breaks an invariant (duplicate edge,
    rank out of range, capacity below one, unknown agent).
    """
    section: str | None = None
    agents: list[str] = []
    caps: dict[str, int] = {}
    edges: list[Edge] = []
    raw: dict[str, list[tuple[int, str]]] = {s: [] for s in _SECTIONS}

    for lineno, full in enumerate(text.splitlines(), start=1):
        line = full.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            name = line.strip("[]").strip()
            if name not in _SECTIONS:
                raise ParseError(f"line {lineno}: unknown section [{name}]")
            section = name
            continue
        if section is None:
            raise ParseError(f"line {lineno}: content before any section header")
        raw[section].append((lineno, line))

    def fail(lineno: int, msg: str) -> ParseError:
        return ParseError(f"line {lineno}: {msg}")

    for lineno, line in raw["agents"]:
        parts = line.split()
        name = parts[0]
        if name in caps:
            raise fail(lineno, f"duplicate agent {name!r}")
        cap = 1
        for tok in parts[1:]:
            if tok.startswith("cap="):
                try:
                    cap = int(tok[4:])
                except ValueError:
                    raise fail(lineno, f"bad capacity {tok!r}") from None
            else:
                raise fail(lineno, f"unexpected token {tok!r}")
        if cap < 1:
            raise fail(lineno, f"capacity of {name!r} must be >= 1")
        agents.append(name)
        caps[name] = cap
    known = set(agents)

    def need_agent(lineno: int, name: str) -> str:
        if name not in known:
            raise fail(lineno, f"unknown agent {name!r}")
        return name

    seen_edges: set[Edge] = set()
    for lineno, line in raw["edges"]:
        parts = line.split()
        if len(parts) != 2:
            raise fail(lineno, "expected '<id> <id>'")
        u, v = (need_agent(lineno, p) for p in parts)
        if u == v:
            raise fail(lineno, "loop edge")
        e = make_edge(u, v)
        if e in seen_edges:
            raise fail(lineno, f"duplicate edge {u} {v}")
        seen_edges.add(e)
        edges.append(e)

    def need_edge(lineno: int, u: str, v: str) -> Edge:
        e = make_edge(need_agent(lineno, u), need_agent(lineno, v))
        if e not in seen_edges:
            raise fail(lineno, f"{u} {v} is not an edge")
        return e

    values: dict[tuple[str, Edge], float] = {}
    for lineno, line in raw["values"]:
        if ":" not in line:
            raise fail(lineno, "expected '<id>: <neighbor>=<real> ...'")
        head, rest = line.split(":", 1)
        v = need_agent(lineno, head.strip())
        for tok in rest.split():
            if "=" not in tok:
                raise fail(lineno, f"expected '<neighbor>=<real>', got {tok!r}")
            nb, num = tok.split("=", 1)
            e = need_edge(lineno, v, nb)
            try:
                x = float(num)
            except ValueError:
                raise fail(lineno, f"bad value {num!r}") from None
            if x < 0:
                raise fail(lineno, "preference values must be nonnegative")
            if (v, e) in values:
                raise fail(lineno, f"duplicate value for {v} on {nb}")
            values[(v, e)] = x

    orders: dict[str, tuple[str, ...]] = {}
    for lineno, line in raw["orders"]:
        if ":" not in line:
            raise fail(lineno, "expected '<id>: <n1> > <n2> > ...'")
        head, rest = line.split(":", 1)
        v = need_agent(lineno, head.strip())
        if v in orders:
            raise fail(lineno, f"duplicate order for {v!r}")
        lst = tuple(t.strip() for t in rest.split(">") if t.strip())
        for u in lst:
            need_edge(lineno, v, u)
        if len(set(lst)) != len(lst):
            raise fail(lineno, f"duplicate entry in order of {v!r}")
        orders[v] = lst

    ranks: dict[tuple[str, Edge], int] = {}
    rank_positions: dict[str, set[int]] = {}
    deg: dict[str, int] = {a: 0 for a in agents}
    for u, v in seen_edges:
        deg[u] += 1
        deg[v] += 1
    for lineno, line in raw["ranks"]:
        parts = line.split()
        if len(parts) != 3:
            raise fail(lineno, "expected '<id> <neighbor> <int>'")
        v, nb, num = parts
        e = need_edge(lineno, v, nb)
        try:
            r = int(num)
        except ValueError:
            raise fail(lineno, f"bad rank {num!r}") from None
        if not 1 <= r <= deg[v]:
            raise fail(lineno, "rank out of range")
        if (v, e) in ranks:
            raise fail(lineno, f"duplicate rank for {v} on {nb}")
        if r in rank_positions.setdefault(v, set()):
            raise fail(lineno, f"position {r} assigned twice at {v}")
        rank_positions[v].add(r)
        ranks[(v, e)] = r

    matching_edges: list[Edge] = []
    for lineno, line in raw["matching"]:
        parts = line.split()
        if len(parts) != 2:
            raise fail(lineno, "expected '<id> <id>'")
        e = need_edge(lineno, *parts)
        if e in matching_edges:
            raise fail(lineno, f"duplicate matching edge {parts[0]} {parts[1]}")
        matching_edges.append(e)

    bounds: dict[tuple[str, Edge], tuple[float, float | None]] = {}
    for lineno, line in raw["bounds"]:
        parts = line.split()
        if len(parts) < 3:
            raise fail(lineno, "expected '<id> <neighbor> l=<x> [u=<y>]'")
        e = need_edge(lineno, parts[0], parts[1])
        lo: float | None = None
        hi: float | None = None
        for tok in parts[2:]:
            if tok.startswith("l="):
                lo = float(tok[2:])
            elif tok.startswith("u="):
                hi = float(tok[2:])
            else:
                raise fail(lineno, f"unexpected token {tok!r}")
        if lo is None:
            raise fail(lineno, "missing lower bound")
        if lo < 0 or (hi is not None and hi < lo):
            raise fail(lineno, "bounds must satisfy 0 <= l <= u")
        bounds[(parts[0], e)] = (lo, hi)

    weights: dict[str, float] = {}
    for lineno, line in raw["weights"]:
        parts = line.split()
        if len(parts) != 2:
            raise fail(lineno, "expected '<id> <real>'")
        v = need_agent(lineno, parts[0])
        w = float(parts[1])
        if w <= 0:
            raise fail(lineno, "agent weights must be positive")
        weights[v] = w

    subset: list[str] = []
    for lineno, line in raw["subset"]:
        for tok in line.split():
            subset.append(need_agent(lineno, tok))

    colors: dict[Edge, str] = {}
    for lineno, line in raw["colors"]:
        parts = line.split()
        if len(parts) != 3 or parts[2] not in ("r", "b"):
            raise fail(lineno, "expected '<id> <id> r|b'")
        e = need_edge(lineno, parts[0], parts[1])
        if e in colors:
            raise fail(lineno, f"duplicate color for {parts[0]} {parts[1]}")
        colors[e] = parts[2]

    inst = Instance(
        tuple(agents),
        tuple(sorted(seen_edges)),
        caps,
        values=Values(values) if values else None,
        orders=StrictOrders(orders) if orders else None,
        ranks=Ranks(ranks) if ranks else None,
    )
    matching = QMatching(tuple(matching_edges)) if raw["matching"] else None
    if matching is not None:
        check_q_matching(inst, matching)
    return ParsedFile(
        instance=inst,
        matching=matching,
        bounds=bounds,
        weights=weights,
        subset=tuple(subset),
        colors=colors,
    )


def format_instance(
    inst: Instance,
    matching: QMatching | None = None,
    *,
    colors: Mapping[Edge, str] | None = None,
) -> str:
    """Emit an instance (plus optional sections) in the parseable format."""
    out: list[str] = ["[agents]"]
    for a in inst.agents:
        cap = inst.capacity[a]
        out.append(a if cap == 1 else f"{a} cap={cap}")
    out.append("[edges]")
    for u, v in inst.edges:
        out.append(f"{u} {v}")
    if inst.values is not None:
        out.append("[values]")
        for a in inst.agents:
            if inst.degree(a) == 0:
                continue
            parts = " ".join(
                f"{u}={inst.values.value(a, make_edge(a, u))!r}"
                for u in inst.neighbors(a)
            )
            out.append(f"{a}: {parts}")
    if inst.orders is not None:
        out.append("[orders]")
        for a in inst.agents:
            lst = inst.orders.order.get(a)
            if lst:
                out.append(f"{a}: " + " > ".join(lst))
    if inst.ranks is not None:
        out.append("[ranks]")
        for (v, e), r in sorted(inst.ranks.r.items()):
            out.append(f"{v} {other_end(e, v)} {r}")
    if colors:
        out.append("[colors]")
        for e in sorted(colors):
            out.append(f"{e[0]} {e[1]} {colors[e]}")
    if matching is not None:
        out.append("[matching]")
        for u, v in matching.edges:
            out.append(f"{u} {v}")
    return "\n".join(out) + "\n"
