"""Minimum-L1 preference modification making a given q-matching weakly stable.

Agents value their incident edges with nonnegative reals; an outside edge
strongly blocks when both endpoints either have spare capacity or strictly
prefer it to one of their matching edges.  The repair changes values at
minimum total weighted absolute deviation so that no edge strongly blocks.

Structure of the solvers: after clamping values into their allowed
intervals and dropping outside edges that some endpoint already tolerates,
every remaining outside edge must be neutralised ("dominated") at one of
its saturated endpoints.  Neutralising a set of edges at one vertex is a
one-dimensional convex problem solved in closed form by scanning the
breakpoints of

    phi(t) = lambda_v * (sum over matching edges of (t - p)_+ +
             sum over chosen edges of (p - t)_+),

and the per-vertex optimum, as a function of the chosen edge set, is
normalized, monotone and submodular.  Choosing the dominating endpoint of
every blocking edge is therefore a submodular minimization:

* ``solve_bipartite``: when the blocking edges admit a 2-colouring, the
  endpoint-choice objective splits into one submodular term per side, and
  minimizing it exactly gives the true optimum.
* ``solve_2approx``: in general the coupled objective is only submodular,
  so the solver minimizes the decoupled sum of the two sides instead.  The
  decoupled value is an upper bound on the realized cost and at most twice
  the optimum (each side is bounded by the full cover's cost), which makes
  every run carry its own certificate.
* ``solve_frozen``: with matching values immutable, each blocking edge is
  independently lowered to the matching minimum at its cheaper endpoint.

``minimize_submodular`` enumerates outright on small ground sets and runs
the Fujishige-Wolfe minimum-norm-point algorithm on larger ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import chain
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .core import (
    Edge,
    Instance,
    InstanceError,
    QMatching,
    Values,
    check_q_matching,
    is_maximal,
    is_stable,
    TOLERANCE,
)

__all__ = [
    "InfeasibleError",
    "BriberyProblem",
    "PreparedBribery",
    "CoverProblem",
    "BriberySolution",
    "Change",
    "preprocess",
    "domination_cost",
    "build_cover_problem",
    "minimize_submodular",
    "solve_bipartite",
    "solve_2approx",
    "solve_frozen",
]

INF = math.inf

#: Cost comparisons between solver routes use this slack.
COST_TOL = 1e-6


class InfeasibleError(Exception):
    """No preference modification can make the matching weakly stable."""


class Change(NamedTuple):
    agent: str
    edge: Edge
    old: float
    new: float


@dataclass(frozen=True)
class BriberyProblem:
    """A value-repair problem.

    ``bounds`` maps ``(agent, edge)`` to an interval ``(lo, hi)`` for the
    modified value (``hi`` may be ``None`` for unbounded above); ``weights``
    carries the per-agent cost multipliers, defaulting to one.
    """

    inst: Instance
    matching: QMatching
    bounds: Mapping[tuple[str, Edge], tuple[float, float | None]] = field(
        default_factory=dict
    )
    weights: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.inst.values is None:
            raise InstanceError("bribery requires an instance with values")
        check_q_matching(self.inst, self.matching)
        for (v, e), (lo, hi) in self.bounds.items():
            if lo < 0 or (hi is not None and hi < lo):
                raise InstanceError(f"bounds of {v} on {e} must satisfy 0 <= l <= u")
        for v, lam in self.weights.items():
            if lam <= 0:
                raise InstanceError(f"weight of {v!r} must be positive")

    def value(self, v: str, e: Edge) -> float:
        return self.inst.values.value(v, e)  # type: ignore[union-attr]

    def weight(self, v: str) -> float:
        return self.weights.get(v, 1.0)

    def interval(self, v: str, e: Edge) -> tuple[float, float | None]:
        return self.bounds.get((v, e), (0.0, None))

    def matched(self, v: str) -> tuple[Edge, ...]:
        return self.matching.at(v)

    def saturated(self, v: str) -> bool:
        return self.matching.degree(v) >= self.inst.capacity[v]


@dataclass(frozen=True)
class PreparedBribery:
    """Preprocessed problem: clamped values, dominated edges removed."""

    problem: BriberyProblem  # values clamped into their intervals
    original: BriberyProblem
    clamp_changes: tuple[Change, ...]
    dominated: tuple[Edge, ...]
    blocking: tuple[Edge, ...]


def preprocess(prob: BriberyProblem, *, frozen_matching: bool = False) -> PreparedBribery:
    """Clamp values into their intervals and drop dominated outside edges.

    After clamping, an outside edge whose value at some saturated endpoint
    does not exceed that endpoint's worst matching value (up to the
    strictness tolerance) can never strongly block and is removed; the
    remaining outside edges are exactly the blocking ones.  Raises
    ``InfeasibleError`` when the matching is not maximal, or when
    ``frozen_matching`` forbids a clamp that the bounds would force on a
    matching edge.
    """
    inst, m = prob.inst, prob.matching
    if not is_maximal(inst, m):
        raise InfeasibleError("problem is infeasible: the matching is not maximal")
    mset = set(m.edges)
    clamped: dict[tuple[str, Edge], float] = {}
    clamps: list[Change] = []
    for v in inst.agents:
        for e in inst.incident(v):
            p = prob.value(v, e)
            lo, hi = prob.interval(v, e)
            new = p
            if p < lo:
                new = lo
            elif hi is not None and p > hi:
                new = hi
            if new != p:
                if frozen_matching and e in mset:
                    raise InfeasibleError(
                        f"matching value of {v} on {e} violates its bounds "
                        "and may not change"
                    )
                clamps.append(Change(v, e, p, new))
            clamped[(v, e)] = new

    cprob = BriberyProblem(
        inst=Instance(
            inst.agents,
            inst.edges,
            dict(inst.capacity),
            values=Values(clamped),
        ),
        matching=m,
        bounds=prob.bounds,
        weights=prob.weights,
    )

    dominated: list[Edge] = []
    blocking: list[Edge] = []
    for e in inst.edges:
        if e in mset:
            continue
        if any(_tolerates(cprob, x, e) for x in e):
            dominated.append(e)
        else:
            blocking.append(e)
    for e in blocking:
        if not (cprob.saturated(e[0]) or cprob.saturated(e[1])):  # pragma: no cover
            raise RuntimeError(f"blocking edge {e} has two unsaturated endpoints")
    return PreparedBribery(
        problem=cprob,
        original=prob,
        clamp_changes=tuple(clamps),
        dominated=tuple(dominated),
        blocking=tuple(blocking),
    )


def _tolerates(prob: BriberyProblem, v: str, e: Edge) -> bool:
    """Does ``v`` already fail to strictly improve along ``e``?"""
    if not prob.saturated(v):
        return False
    worst = min(prob.value(v, f) for f in prob.matched(v))
    return prob.value(v, e) <= worst + TOLERANCE


def domination_cost(
    prob: BriberyProblem, v: str, targets: Iterable[Edge]
) -> tuple[float, list[Change]]:
    """Cheapest change of ``v``'s values making it tolerate all ``targets``.

    Scans the breakpoints of the convex threshold objective: pick a level
    ``t``, raise matching values below it, lower target values above it.
    Levels are confined to ``[max of target lower bounds, min of matching
    upper bounds]``; an empty interval (or an unsaturated ``v``) costs
    infinity.  Expects values already inside their intervals, as produced
    by ``preprocess``.
    """
    tgt = sorted(set(targets))
    incident = set(prob.inst.incident(v))
    mset = set(prob.matched(v))
    for e in tgt:
        if e not in incident or e in mset:
            raise InstanceError(f"{e} is not an outside edge at {v}")
    if not tgt:
        return 0.0, []
    if not prob.saturated(v):
        return INF, []
    lam = prob.weight(v)
    matched = sorted(mset)
    lo = 0.0
    for f in tgt:
        lo = max(lo, prob.interval(v, f)[0])
    hi = INF
    for e in matched:
        u = prob.interval(v, e)[1]
        if u is not None:
            hi = min(hi, u)
    if lo > hi:
        return INF, []

    mvals = [prob.value(v, e) for e in matched]
    tvals = [prob.value(v, f) for f in tgt]

    def phi(t: float) -> float:
        raise_part = sum(t - p for p in mvals if p < t)
        lower_part = sum(p - t for p in tvals if p > t)
        return lam * (raise_part + lower_part)

    cands = {lo}
    if hi < INF:
        cands.add(hi)
    for p in chain(mvals, tvals):
        cands.add(min(max(p, lo), hi))
    best_t = min(cands)
    best = phi(best_t)
    for t in sorted(cands):
        val = phi(t)
        if val < best - 1e-15:
            best, best_t = val, t
    changes = [
        Change(v, e, p, best_t) for e, p in zip(matched, mvals) if p < best_t
    ]
    changes += [Change(v, f, p, best_t) for f, p in zip(tgt, tvals) if p > best_t]
    return best, changes


@dataclass(frozen=True)
class CoverProblem:
    """Endpoint-choice formulation of a preprocessed bribery problem.

    ``copies`` holds one ``(edge, vertex)`` token per blocking edge and
    saturated endpoint; ``candidates[i]`` lists the tokens of blocking edge
    ``i``.  ``cost`` maps any token set to the total domination cost of
    assigning each mentioned edge to its mentioned endpoint; it is
    normalized, nonnegative, monotone and submodular.
    """

    blocking: tuple[Edge, ...]
    copies: tuple[tuple[Edge, str], ...]
    candidates: tuple[tuple[tuple[Edge, str], ...], ...]
    cost: Callable[[Iterable[tuple[Edge, str]]], float]


def build_cover_problem(prep: PreparedBribery) -> CoverProblem:
    """Expose the endpoint-choice cost of a preprocessed problem."""
    prob = prep.problem
    copies: list[tuple[Edge, str]] = []
    candidates: list[tuple[tuple[Edge, str], ...]] = []
    for e in prep.blocking:
        cands = tuple((e, x) for x in e if prob.saturated(x))
        candidates.append(cands)
        copies.extend(cands)

    def cost(tokens: Iterable[tuple[Edge, str]]) -> float:
        per_vertex: dict[str, list[Edge]] = {}
        for e, x in tokens:
            per_vertex.setdefault(x, []).append(e)
        total = 0.0
        for x in sorted(per_vertex):
            c, _ = domination_cost(prob, x, per_vertex[x])
            if c == INF:
                return INF
            total += c
        return total

    return CoverProblem(
        blocking=prep.blocking,
        copies=tuple(copies),
        candidates=tuple(candidates),
        cost=cost,
    )


# ---------------------------------------------------------------------------
# Submodular function minimization
# ---------------------------------------------------------------------------

_Z1 = 1e-12
_Z2 = 1e-10


def minimize_submodular(
    f: Callable[[frozenset[int]], float],
    n: int,
    *,
    exhaustive_cap: int = 20,
) -> tuple[frozenset[int], float]:
    """Minimize a normalized submodular function over subsets of ``range(n)``.

    Enumerates all subsets when ``n`` does not exceed ``exhaustive_cap``;
    otherwise runs the Fujishige-Wolfe minimum-norm-point algorithm on the
    base polytope and reads the minimizer off the sign pattern of the
    minimum-norm vector, keeping the best of the induced threshold sets.
    """
    memo: dict[frozenset[int], float] = {}

    def fm(s: frozenset[int]) -> float:
        val = memo.get(s)
        if val is None:
            val = f(s)
            if isinstance(val, float) and math.isnan(val):
                raise ValueError("submodular oracle returned NaN")
            memo[s] = val
        return val

    base = fm(frozenset())
    if abs(base) > 1e-6:
        raise ValueError("submodular oracle is not normalized: f({}) != 0")
    if n == 0:
        return frozenset(), base

    if n <= exhaustive_cap:
        best_set = frozenset()
        best = base
        for mask in range(1, 1 << n):
            s = frozenset(i for i in range(n) if mask >> i & 1)
            val = fm(s)
            if val < best - 1e-12:
                best, best_set = val, s
        return best_set, best

    x = _wolfe_min_norm(fm, n)
    order = np.argsort(x, kind="mergesort")
    cands = [frozenset()]
    prefix: list[int] = []
    for k in range(n):
        prefix.append(int(order[k]))
        if k + 1 < n and x[order[k + 1]] - x[order[k]] < _Z2:
            continue  # only cut between strictly distinct coordinates
        cands.append(frozenset(prefix))
    best_set = frozenset()
    best = base
    for s in cands:
        val = fm(s)
        if val < best - 1e-12:
            best, best_set = val, s
    return best_set, best


def _greedy_vertex(fm: Callable[[frozenset[int]], float], w: np.ndarray) -> np.ndarray:
    """Base-polytope vertex minimizing the inner product with ``w``."""
    order = np.argsort(w, kind="mergesort")
    x = np.empty(len(w))
    prev = 0.0
    members: list[int] = []
    for i in order:
        members.append(int(i))
        cur = fm(frozenset(members))
        x[i] = cur - prev
        prev = cur
    return x


def _affine_minimizer(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min-norm point of the affine hull of the rows of ``s``."""
    m = s.shape[0]
    gram = s @ s.T
    a = np.zeros((m + 1, m + 1))
    a[0, 1:] = 1.0
    a[1:, 0] = 1.0
    a[1:, 1:] = gram
    rhs = np.zeros(m + 1)
    rhs[0] = 1.0
    sol = np.linalg.lstsq(a, rhs, rcond=None)[0]
    coeff = sol[1:]
    return coeff, coeff @ s


def _wolfe_min_norm(fm: Callable[[frozenset[int]], float], n: int) -> np.ndarray:
    """Fujishige-Wolfe minimum-norm point in the base polytope."""
    x = _greedy_vertex(fm, np.zeros(n))
    corral = x.reshape(1, n)
    coeff = np.array([1.0])
    for _ in range(16 * n * n + 200):
        q = _greedy_vertex(fm, x)
        scale = max(float(x @ x), float(q @ q), 1.0)
        if float(x @ x) <= float(x @ q) + _Z1 * scale:
            break
        if any(np.allclose(q, row, atol=_Z2) for row in corral):
            break
        corral = np.vstack([corral, q])
        coeff = np.append(coeff, 0.0)
        while True:
            bary, y = _affine_minimizer(corral)
            if np.all(bary > _Z1):
                coeff, x = bary, y
                break
            shrink = coeff - bary > _Z2
            theta = np.min(coeff[shrink] / (coeff - bary)[shrink])
            theta = min(max(theta, 0.0), 1.0)
            coeff = theta * bary + (1 - theta) * coeff
            keep = coeff > _Z2
            if keep.all():
                coeff[~keep] = 0.0
            corral = corral[keep]
            coeff = coeff[keep]
            coeff = coeff / coeff.sum()
            x = coeff @ corral
    return x


# ---------------------------------------------------------------------------
# Solvers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BriberySolution:
    """Modified values under which the matching is weakly stable."""

    new_values: Values
    cost: float
    changed: tuple[Change, ...]


def _singleton_candidates(prep: PreparedBribery) -> tuple[
    list[tuple[Edge, str]], list[Edge]
]:
    """Split blocking edges into forced assignments and free choices."""
    prob = prep.problem
    forced: list[tuple[Edge, str]] = []
    free: list[Edge] = []
    for e in prep.blocking:
        cands = [
            x
            for x in e
            if prob.saturated(x) and domination_cost(prob, x, [e])[0] < INF
        ]
        if not cands:
            raise InfeasibleError(
                f"blocking edge {e[0]} {e[1]} cannot be dominated at either endpoint"
            )
        if len(cands) == 1:
            forced.append((e, cands[0]))
        else:
            free.append(e)
    return forced, free


def _assignment_cost(prob: BriberyProblem, tokens: Iterable[tuple[Edge, str]]) -> float:
    per_vertex: dict[str, list[Edge]] = {}
    for e, x in tokens:
        per_vertex.setdefault(x, []).append(e)
    total = 0.0
    for x in sorted(per_vertex):
        c, _ = domination_cost(prob, x, per_vertex[x])
        if c == INF:
            return INF
        total += c
    return total


def _realize(
    prep: PreparedBribery, tokens: Iterable[tuple[Edge, str]]
) -> BriberySolution:
    """Apply clamps plus the optimal per-vertex changes of an assignment."""
    prob, orig = prep.problem, prep.original
    per_vertex: dict[str, list[Edge]] = {}
    for e, x in tokens:
        per_vertex.setdefault(x, []).append(e)
    final: dict[tuple[str, Edge], float] = dict(prob.inst.values.p)  # type: ignore[union-attr]
    for x in sorted(per_vertex):
        c, changes = domination_cost(prob, x, per_vertex[x])
        if c == INF:  # pragma: no cover - callers pick finite assignments
            raise InfeasibleError(f"assignment is infeasible at {x}")
        for ch in changes:
            final[(ch.agent, ch.edge)] = ch.new
    new_values = Values(final)
    ledger: list[Change] = []
    cost = 0.0
    for v in orig.inst.agents:
        for e in orig.inst.incident(v):
            before = orig.value(v, e)
            after = final[(v, e)]
            cost += orig.weight(v) * abs(before - after)
            if before != after:
                ledger.append(Change(v, e, before, after))
    stable_inst = Instance(
        orig.inst.agents,
        orig.inst.edges,
        dict(orig.inst.capacity),
        values=new_values,
    )
    ok, witness = is_stable(stable_inst, orig.matching)
    if not ok:  # pragma: no cover - the cover construction guarantees this
        raise RuntimeError(f"realized values leave a blocking edge {witness}")
    return BriberySolution(
        new_values=new_values, cost=cost, changed=tuple(sorted(ledger))
    )


def _two_color_blocking(prep: PreparedBribery) -> dict[str, int] | None:
    """2-colouring of the subgraph induced by the blocking edges, if any."""
    adj: dict[str, list[str]] = {}
    for u, v in prep.blocking:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    color: dict[str, int] = {}
    for start in sorted(adj):
        if start in color:
            continue
        color[start] = 0
        queue = [start]
        while queue:
            u = queue.pop()
            for w in adj[u]:
                if w not in color:
                    color[w] = 1 - color[u]
                    queue.append(w)
                elif color[w] == color[u]:
                    return None
    return color


def _choice_tokens(
    free: Sequence[Edge], chosen: frozenset[int], side_of: dict[str, int] | None
) -> list[tuple[Edge, str]]:
    """Endpoint tokens of a choice set: index in ``chosen`` picks side 0."""
    tokens = []
    for i, e in enumerate(free):
        if side_of is None:
            first, second = e  # canonical order: min id is side 0
        else:
            first, second = sorted(e, key=lambda x: side_of[x])
        tokens.append((e, first if i in chosen else second))
    return tokens


def solve_bipartite(
    prob: BriberyProblem, *, exhaustive_cap: int = 20
) -> BriberySolution:
    """Exact minimum-cost repair for 2-colourable blocking structure.

    The choice objective decomposes across the two sides into a sum of one
    submodular function of the chosen set and one of its complement, so the
    submodular minimizer returns the exact optimum.  Instances whose
    blocking edges contain an odd cycle are still solved exactly while the
    number of free choices fits the exhaustive cap, and rejected otherwise.
    """
    prep = preprocess(prob)
    forced, free = _singleton_candidates(prep)
    if not free:
        return _realize(prep, forced)
    side_of = _two_color_blocking(prep)
    if side_of is None and len(free) > exhaustive_cap:
        raise InstanceError(
            "blocking structure is not bipartite; exact solving is limited to "
            f"{exhaustive_cap} free blocking edges"
        )
    cprob = prep.problem

    def g(chosen: frozenset[int]) -> float:
        return _assignment_cost(
            cprob, forced + _choice_tokens(free, chosen, side_of)
        )

    base = g(frozenset())
    chosen, _ = minimize_submodular(
        lambda s: g(s) - base, len(free), exhaustive_cap=exhaustive_cap
    )
    return _realize(prep, forced + _choice_tokens(free, chosen, side_of))


def solve_2approx(
    prob: BriberyProblem, *, exhaustive_cap: int = 20
) -> tuple[BriberySolution, float]:
    """Factor-2 repair for general graphs, with a per-run certificate.

    Minimizes the decoupled objective ``c(side-0 tokens) + c(side-1
    tokens)``, which is submodular outright, then realizes the coupled
    cover.  Returns the solution and the certified upper bound: the
    decoupled value plus the clamping cost, which the realized cost never
    exceeds and which is at most twice the true optimum.
    """
    prep = preprocess(prob)
    forced, free = _singleton_candidates(prep)
    cprob = prep.problem
    forced0 = [t for t in forced if t[1] == t[0][0]]
    forced1 = [t for t in forced if t[1] == t[0][1]]

    def decoupled(chosen: frozenset[int]) -> float:
        rest = frozenset(range(len(free))) - chosen
        tokens0 = forced0 + [(free[i], free[i][0]) for i in sorted(chosen)]
        tokens1 = forced1 + [(free[i], free[i][1]) for i in sorted(rest)]
        return _assignment_cost(cprob, tokens0) + _assignment_cost(cprob, tokens1)

    base = decoupled(frozenset())
    chosen, _ = minimize_submodular(
        lambda s: decoupled(s) - base, len(free), exhaustive_cap=exhaustive_cap
    )
    clamp_cost = sum(
        prep.original.weight(c.agent) * abs(c.old - c.new)
        for c in prep.clamp_changes
    )
    bound = decoupled(chosen) + clamp_cost
    solution = _realize(prep, forced + _choice_tokens(free, chosen, None))
    if solution.cost > bound + COST_TOL:  # pragma: no cover
        raise RuntimeError("certificate bound fell below the realized cost")
    return solution, bound


def solve_frozen(prob: BriberyProblem) -> BriberySolution:
    """Exact repair when matching values may not change.

    Every blocking edge is lowered to the minimum matching value at the
    endpoint where doing so is cheapest (weighted), ties toward the smaller
    agent id; endpoints that are unsaturated, or whose matching minimum
    lies below the edge's lower bound, are excluded.
    """
    prep = preprocess(prob, frozen_matching=True)
    cprob = prep.problem
    final: dict[tuple[str, Edge], float] = dict(cprob.inst.values.p)  # type: ignore[union-attr]
    for e in prep.blocking:
        options: list[tuple[float, str, float]] = []
        for x in sorted(e):
            if not cprob.saturated(x):
                continue
            floor = min(cprob.value(x, f) for f in cprob.matched(x))
            if floor < cprob.interval(x, e)[0]:
                continue
            drop = cprob.weight(x) * max(0.0, cprob.value(x, e) - floor)
            options.append((drop, x, floor))
        if not options:
            raise InfeasibleError(
                f"blocking edge {e[0]} {e[1]} cannot be lowered at either endpoint"
            )
        _, x, floor = min(options, key=lambda o: (o[0], o[1]))
        final[(x, e)] = floor

    orig = prep.original
    new_values = Values(final)
    ledger: list[Change] = []
    cost = 0.0
    for v in orig.inst.agents:
        for e in orig.inst.incident(v):
            before, after = orig.value(v, e), final[(v, e)]
            cost += orig.weight(v) * abs(before - after)
            if before != after:
                ledger.append(Change(v, e, before, after))
    stable_inst = Instance(
        orig.inst.agents,
        orig.inst.edges,
        dict(orig.inst.capacity),
        values=new_values,
    )
    ok, witness = is_stable(stable_inst, orig.matching)
    if not ok:  # pragma: no cover
        raise RuntimeError(f"frozen repair left a blocking edge {witness}")
    return BriberySolution(
        new_values=new_values, cost=cost, changed=tuple(sorted(ledger))
    )
