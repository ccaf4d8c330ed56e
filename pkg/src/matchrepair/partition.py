"""Stable partitions, minimum vertex deletion, and subset deletion.

A stable partition of a strict-preference unit-capacity instance is a
permutation ``pi`` of the agents such that

(i)  whenever ``pi(u) != pi^-1(u)``, both ``u pi(u)`` and ``u pi^-1(u)`` are
     edges and ``u`` strictly prefers ``pi(u)`` to ``pi^-1(u)``; and
(ii) no edge ``uv`` exists where both endpoints would trade up, i.e. where
     ``u`` is a fixed point or prefers ``v`` to ``pi^-1(u)``, and likewise
     with the roles swapped.

Every instance admits one, all of them share the same singletons and odd
cycles, and a stable matching exists iff no cycle has odd length >= 3.  The
odd cycles therefore certify non-existence, and deleting one agent from each
odd cycle of length >= 3 gives a minimum removable set.

``stable_partition`` runs a proposal round that reduces the preference table
to a semiassignment (each surviving agent points at the head of its list and
holds the proposer at its tail), then repeatedly exposes rotations.  An
exposed rotation is normally eliminated, shrinking the table; when the
rotation closes on itself and its members' lists are down to two entries, no
semiassignment refinement exists for them and the members are frozen as a
cycle of the permutation, pairing each with its list head.  Eliminations and
freezes both shrink the table, so the procedure cannot stall.  The defining
conditions are re-checked on every output before it is returned, so the
guarantees never rest on the derivation alone.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import combinations

from .core import Edge, Instance, InstanceError, QMatching, induced_instance, make_edge

__all__ = [
    "StablePartition",
    "DeletionResult",
    "stable_partition",
    "verify_partition",
    "min_removable_set",
    "subset_removable",
]


@dataclass(frozen=True)
class StablePartition:
    """A stable partition with its cycle decomposition.

    Cycles are rotated so the lowest id comes first and are listed in order
    of their lowest id; singletons appear both as 1-cycles and in
    ``singletons``.
    """

    pi: dict[str, str]
    cycles: tuple[tuple[str, ...], ...]
    odd_cycles: tuple[tuple[str, ...], ...]
    singletons: tuple[str, ...]


@dataclass(frozen=True)
class DeletionResult:
    """A removable set together with a stable matching of the rest."""

    removed: tuple[str, ...]
    matching: QMatching


def _require_unit_strict(inst: Instance) -> None:
    if inst.orders is None:
        raise InstanceError("stable partitions require strict orders")
    for v in inst.agents:
        if inst.capacity[v] != 1:
            raise InstanceError("stable partitions require unit capacities")
        lst = inst.orders.order.get(v, ())
        if set(lst) != set(inst.neighbors(v)):
            raise InstanceError(f"order of {v!r} is not total on its neighbours")


class _Table:
    """Reduced preference table over integer agent indices.

    Lists are kept best-first.  Pairs leave the table symmetrically, and a
    pair is only ever dropped when the rejecting side's tail entry (the
    proposal it holds) is strictly better, so a deleted edge can never block
    the final permutation.
    """

    def __init__(self, inst: Instance):
        self.ids = sorted(inst.agents)
        self.index = {a: i for i, a in enumerate(self.ids)}
        order = inst.orders.order  # type: ignore[union-attr]
        self.lists: list[list[int]] = [
            [self.index[u] for u in order.get(a, ())] for a in self.ids
        ]
        self.rank: list[dict[int, int]] = [
            {u: i for i, u in enumerate(lst)} for lst in self.lists
        ]
        self.frozen: dict[int, int] = {}  # frozen member -> its successor

    def delete(self, a: int, b: int) -> None:
        self.lists[a].remove(b)
        self.lists[b].remove(a)

    # -- phase 1: proposals -------------------------------------------------

    def propose_all(self) -> None:
        """Reduce to a semiassignment: heads point, tails hold.

        Each free agent proposes to the head of its list.  The head always
        accepts (its list was truncated below its current proposer, so any
        remaining suitor is an improvement), truncates below the newcomer,
        and thereby releases its previous proposer.
        """
        n = len(self.ids)
        engaged = [-1] * n
        held = [-1] * n
        queue = deque(range(n))
        while queue:
            x = queue.popleft()
            if engaged[x] != -1 or not self.lists[x]:
                continue
            y = self.lists[x][0]
            old = held[y]
            held[y] = x
            engaged[x] = y
            # Truncate y's list below x; the displaced proposer goes with it.
            tail = list(self.lists[y][self.lists[y].index(x) + 1 :])
            for w in tail:
                self.delete(y, w)
                if engaged[w] == y:
                    engaged[w] = -1
                    queue.append(w)
            assert old == -1 or engaged[old] == -1, "displaced agent not freed"

    # -- phase 2: rotations and parties --------------------------------------

    def expose_rotation(self, start: int) -> tuple[list[int], list[int]]:
        """Walk second/tail pointers from ``start`` until a cycle closes.

        Returns the cyclic part as ``(xs, ys)`` with ``ys[i]`` the second
        entry of ``xs[i]``'s list and ``xs[i+1]`` the tail of ``ys[i]``'s.
        """
        seen: dict[int, int] = {}
        seq: list[int] = []
        x = start
        while x not in seen:
            seen[x] = len(seq)
            seq.append(x)
            assert len(self.lists[x]) >= 2, "rotation walk hit a settled agent"
            x = self.lists[self.lists[x][1]][-1]
        xs = seq[seen[x] :]
        ys = [self.lists[x][1] for x in xs]
        return xs, ys

    def eliminate(self, xs: list[int], ys: list[int]) -> None:
        """Standard rotation elimination: each y rejects all below its x."""
        pairs: set[tuple[int, int]] = set()
        for xi, yi in zip(xs, ys):
            for w in self.lists[yi][self.lists[yi].index(xi) + 1 :]:
                pairs.add((yi, w) if yi < w else (w, yi))
        for a, b in sorted(pairs):
            self.delete(a, b)
        for xi, yi in zip(xs, ys):
            if not self.lists[yi] or not self.lists[xi]:  # pragma: no cover
                raise RuntimeError("rotation elimination emptied a list")

    def freeze_party(self, xs: list[int]) -> None:
        """Freeze a ripe party (all lists are [head, tail]) as cycles.

        Each member is paired with its list head; the head relation is a
        permutation of the party by the head/tail duality of the table, and
        members hold no outside entries, so nobody else is affected.
        """
        for p in xs:
            self.frozen[p] = self.lists[p][0]
        for p in xs:
            self.lists[p].clear()

    def run_phase2(self) -> None:
        while True:
            pending = [
                x
                for x in range(len(self.ids))
                if x not in self.frozen and len(self.lists[x]) >= 2
            ]
            if not pending:
                return
            xs, ys = self.expose_rotation(pending[0])
            if set(xs) == set(ys) and all(len(self.lists[x]) == 2 for x in xs):
                self.freeze_party(xs)
            else:
                self.eliminate(xs, ys)
            self._check_duality()

    def _check_duality(self) -> None:
        # Head/tail duality of the reduced table: y heads x's list iff x
        # tails y's list.  Cheap, and a loud failure beats a silent one.
        for x in range(len(self.ids)):
            if self.lists[x]:
                y = self.lists[x][0]
                assert self.lists[y][-1] == x, "table duality broken"

    def permutation(self) -> dict[str, str]:
        pi: dict[str, str] = {}
        for x in range(len(self.ids)):
            if x in self.frozen:
                pi[self.ids[x]] = self.ids[self.frozen[x]]
            elif self.lists[x]:
                pi[self.ids[x]] = self.ids[self.lists[x][0]]
            else:
                pi[self.ids[x]] = self.ids[x]
        return pi


def _find_violation(
    inst: Instance, pi: dict[str, str]
) -> tuple[str, tuple[str, str]] | None:
    """First violated condition as ``(kind, (u, v))`` or ``None``."""
    orders = inst.orders
    assert orders is not None
    agents = sorted(inst.agents)
    if set(pi) != set(agents) or set(pi.values()) != set(agents):
        raise InstanceError("pi is not a bijection on the agents")
    inv = {b: a for a, b in pi.items()}
    for u in agents:
        a, b = pi[u], inv[u]
        if a == u:
            continue
        if not inst.has_edge(u, a):
            return ("cycle", (u, a))
        if not inst.has_edge(u, b):
            return ("cycle", (u, b))
        if a != b and not orders.prefers(u, a, b):
            return ("cycle", (u, a))
    for u, v in inst.edges:
        if (pi[u] == u or orders.prefers(u, v, inv[u])) and (
            pi[v] == v or orders.prefers(v, u, inv[v])
        ):
            return ("blocking", (u, v))
    return None


def verify_partition(
    inst: Instance, pi: dict[str, str]
) -> tuple[bool, tuple[str, str] | None]:
    """Check the two defining conditions; on failure return a witness pair.

    Condition (ii) is checked in its no-blocking form: an edge ``uv``
    violates it iff both endpoints would accept the other over what they
    currently hold (a fixed point holds nothing; ``pi^-1(v) == u`` counts as
    holding ``u`` and so never blocks).  Raises ``InstanceError`` when ``pi``
    is not a permutation of the agents.
    """
    _require_unit_strict(inst)
    bad = _find_violation(inst, pi)
    if bad is None:
        return True, None
    return False, bad[1]


def _decompose(pi: dict[str, str]) -> tuple[tuple[str, ...], ...]:
    cycles = []
    seen: set[str] = set()
    for a in sorted(pi):
        if a in seen:
            continue
        cyc = [a]
        seen.add(a)
        b = pi[a]
        while b != a:
            cyc.append(b)
            seen.add(b)
            b = pi[b]
        cycles.append(tuple(cyc))
    return tuple(cycles)


def stable_partition(inst: Instance) -> StablePartition:
    """Compute a stable partition (strict orders, unit capacities).

    Deterministic for a fixed input: ties in rotation search are broken
    toward the lowest agent id.  The result is re-verified against the
    defining conditions before being returned.
    """
    _require_unit_strict(inst)
    table = _Table(inst)
    table.propose_all()
    table._check_duality()
    table.run_phase2()
    pi = table.permutation()
    bad = _find_violation(inst, pi)
    if bad is not None:  # pragma: no cover - guarded by the table invariants
        raise RuntimeError(f"partition violates condition at {bad[1]}")
    cycles = _decompose(pi)
    odd = tuple(c for c in cycles if len(c) >= 3 and len(c) % 2 == 1)
    singles = tuple(c[0] for c in cycles if len(c) == 1)
    return StablePartition(pi=pi, cycles=cycles, odd_cycles=odd, singletons=singles)


def min_removable_set(inst: Instance) -> DeletionResult:
    """Smallest agent set whose deletion leaves a stable matching.

    One agent is removed from each odd cycle of length >= 3 of a stable
    partition (the lowest id, with the cycle rotated to start there); the
    remaining agents of every cycle are matched consecutively along it.
    The returned matching is stable in the reduced instance and the set size
    is minimum possible.
    """
    part = stable_partition(inst)
    removed: list[str] = []
    pairs: list[Edge] = []
    for cyc in part.cycles:
        if len(cyc) == 1:
            continue
        if len(cyc) % 2 == 1:
            removed.append(cyc[0])
            rest = cyc[1:]
        else:
            rest = cyc
        for i in range(0, len(rest), 2):
            pairs.append(make_edge(rest[i], rest[i + 1]))
    return DeletionResult(
        removed=tuple(sorted(removed)), matching=QMatching(tuple(pairs))
    )


def subset_removable(
    inst: Instance, allowed: set[str] | frozenset[str], *, cap: int = 20
) -> frozenset[str] | None:
    """Some removable set inside ``allowed``, or ``None`` if there is none.

    Subsets are tried in increasing size (then lexicographically), and each
    candidate is decided through the odd cycles of a stable partition of the
    reduced instance.  Exponential only in ``len(allowed)``, which must not
    exceed ``cap``.
    """
    _require_unit_strict(inst)
    extra = set(allowed) - set(inst.agents)
    if extra:
        raise InstanceError(f"subset contains unknown agents {sorted(extra)!r}")
    if len(allowed) > cap:
        raise InstanceError(f"subset of size {len(allowed)} exceeds cap {cap}")
    pool = sorted(allowed)
    everyone = set(inst.agents)
    for size in range(len(pool) + 1):
        for s in combinations(pool, size):
            reduced = induced_instance(inst, everyone - set(s))
            if not stable_partition(reduced).odd_cycles:
                return frozenset(s)
    return None
