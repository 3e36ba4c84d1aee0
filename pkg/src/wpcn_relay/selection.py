"""Relay assignment search.

An assignment is a length-``n`` tuple of ints in ``0..k``; entry ``i`` is the
relay used by source ``i`` and ``0`` means direct transmission to the AP.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .model import NetworkInstance, rate
from .scheduler import (
    EffectiveSource,
    Schedule,
    check_assignment,
    expand_assignment,
    nl_powmu,
)

ENUMERATION_CAP = 10**6
_PRUNE_RTOL = 1e-12


@dataclass
class SelectionResult:
    assignment: tuple
    schedule: Schedule
    nodes_explored: int
    elapsed: float

    @property
    def total(self) -> float:
        return self.schedule.total

    def to_dict(self) -> dict:
        return {
            "assignment": list(self.assignment),
            "schedule": self.schedule.to_dict(),
            "nodes_explored": self.nodes_explored,
            "elapsed": self.elapsed,
        }


def _partial_sources(inst: NetworkInstance, prefix) -> list[EffectiveSource]:
    """Transmitters for the first ``len(prefix)`` sources only."""
    p = len(prefix)
    if p == 0:
        return []
    if p == inst.n_sources:
        return expand_assignment(inst, prefix)
    sub = NetworkInstance(
        n_sources=p,
        k_relays=inst.k_relays,
        dl_gain=np.concatenate([inst.dl_gain[:p], inst.dl_gain[inst.n_sources:]]),
        ul_src=inst.ul_src[:p],
        ul_relay=inst.ul_relay,
        demand=inst.demand[:p],
        eh=inst.eh[:p] + inst.eh[inst.n_sources:],
        sys=inst.sys,
    )
    return expand_assignment(sub, prefix)


def _completion_costs(inst: NetworkInstance) -> np.ndarray:
    """Per-source, per-choice full-power IT time (both hops for relays)."""
    sys = inst.sys
    d = inst.demand[:, None]
    cost = d / rate(sys.p_max, inst.ul_src, sys)
    if inst.k_relays:
        cost[:, 1:] += d / rate(sys.p_max, inst.ul_relay[None, :], sys)
    return cost


def _suffix_min(cost: np.ndarray) -> np.ndarray:
    best = cost.min(axis=1)
    return np.concatenate([np.cumsum(best[::-1])[::-1], [0.0]])


def node_lower_bound(inst: NetworkInstance, prefix, eps: float = 1e-9) -> float:
    """Admissible bound on any completion of an assignment prefix.

    The optimal schedule of the assigned sources alone (the others dropped)
    plus, for each unassigned source, its cheapest full-power IT time over
    all choices.  Extra traffic never shortens a relay's IT time by less
    than its full-power time, so the bound never exceeds a completion.
    """
    prefix = tuple(prefix)
    if len(prefix) > inst.n_sources:
        raise ValueError("prefix longer than the number of sources")
    suffix = _suffix_min(_completion_costs(inst))
    head = nl_powmu(_partial_sources(inst, prefix), inst.sys, eps=eps).total
    return head + float(suffix[len(prefix)])


def _or_choice(inst: NetworkInstance) -> np.ndarray:
    n, k = inst.n_sources, inst.k_relays
    if k == 0:
        return np.zeros(n, dtype=int)
    h_src = inst.dl_gain[:n, None]
    h_rel = inst.dl_gain[n:][None, :]
    score = np.minimum(inst.ul_src[:, 1:] * h_src, inst.ul_relay[None, :] * h_rel)
    return np.argmax(score, axis=1) + 1  # argmax keeps the first maximum


def or_select(inst: NetworkInstance) -> tuple:
    """Opportunistic relaying: the relay maximizing the weaker hop's DL*UL product."""
    return tuple(int(j) for j in _or_choice(inst))


def node_upper_bound(inst: NetworkInstance, prefix, eps: float = 1e-9) -> tuple[tuple, float]:
    """Complete ``prefix`` with the OR choice and schedule it."""
    if len(prefix) > inst.n_sources:
        raise ValueError("prefix longer than the number of sources")
    prefix = check_assignment(prefix, len(prefix), inst.k_relays)
    full = prefix + or_select(inst)[len(prefix):]
    return full, nl_powmu(expand_assignment(inst, full), inst.sys, eps=eps).total


def _phi(inst: NetworkInstance) -> tuple[np.ndarray, np.ndarray]:
    hr = inst.harvest_rates()
    n = inst.n_sources
    return inst.ul_src[:, 0] * hr[:n], inst.ul_relay * hr[n:]


def criterion_scores(inst: NetworkInstance) -> np.ndarray:
    """``n x (k+1)`` relay scores; column 0 is the direct link's score.

    Relay ``j`` scores ``min(g_{S_i}^{R_j} phi_{S_i}, g_{R_j}^{AP} phi_{R_j})``
    with ``phi_X = g_X^{AP} * harvest_X``.
    """
    phi_s, phi_r = _phi(inst)
    direct = (inst.ul_src[:, 0] * phi_s)[:, None]
    relay = np.minimum(inst.ul_src[:, 1:] * phi_s[:, None], (inst.ul_relay * phi_r)[None, :])
    return np.hstack([direct, relay])


def criterion_select(inst: NetworkInstance) -> tuple:
    """Best relay by the weaker-hop score, kept only if it beats the direct link.

    The relay must satisfy ``min(g_S^R phi_S, g_R^AP phi_S) > g_S^AP phi_S``;
    otherwise the source transmits directly.
    """
    n, k = inst.n_sources, inst.k_relays
    if k == 0:
        return (0,) * n
    phi_s, _ = _phi(inst)
    scores = criterion_scores(inst)[:, 1:]
    out = []
    for i in range(n):
        j = int(np.argmax(scores[i])) + 1
        lhs = min(inst.ul_src[i, j] * phi_s[i], inst.ul_relay[j - 1] * phi_s[i])
        out.append(j if lhs > inst.ul_src[i, 0] * phi_s[i] else 0)
    return tuple(out)


def direct_select(inst: NetworkInstance) -> tuple:
    return (0,) * inst.n_sources


def enumerate_optimal(
    inst: NetworkInstance, cap: int = ENUMERATION_CAP, eps: float = 1e-9
) -> SelectionResult:
    """Schedule every assignment and keep the shortest.

    Assignments are visited in lexicographic order and replaced only on a
    strict improvement, so ties go to the lexicographically smallest.
    """
    n, k = inst.n_sources, inst.k_relays
    count = (k + 1) ** n
    if count > cap:
        raise ValueError(f"(k+1)^n = {count} assignments exceeds the cap {cap}")
    start = time.perf_counter()
    best_a, best_s = None, None
    for a in itertools.product(range(k + 1), repeat=n):
        s = nl_powmu(expand_assignment(inst, a), inst.sys, eps=eps)
        if best_s is None or s.total < best_s.total:
            best_a, best_s = a, s
    return SelectionResult(best_a, best_s, count, time.perf_counter() - start)


def bba(inst: NetworkInstance, eps: float = 1e-9) -> SelectionResult:
    """Depth-first branch-and-bound over per-source relay choices.

    Sources are branched in index order; children are tried best score
    first.  A node is pruned once its lower bound exceeds the incumbent, so
    the returned assignment is the optimum (ties resolved towards the
    lexicographically smallest assignment).
    """
    start = time.perf_counter()
    n, k = inst.n_sources, inst.k_relays
    suffix = _suffix_min(_completion_costs(inst))
    scores = criterion_scores(inst)
    order = [sorted(range(k + 1), key=lambda j, i=i: (-scores[i, j], j)) for i in range(n)]

    best_a, best_total = node_upper_bound(inst, (), eps=eps)
    nodes = 1  # root
    stack = [((), 0.0)]
    while stack:
        prefix, bound = stack.pop()
        if bound > best_total * (1.0 + _PRUNE_RTOL):
            continue
        open_children = []
        for j in order[len(prefix)]:
            child = prefix + (j,)
            nodes += 1
            lb = nl_powmu(_partial_sources(inst, child), inst.sys, eps=eps).total
            lb += float(suffix[len(child)])
            if lb > best_total * (1.0 + _PRUNE_RTOL):
                continue
            if len(child) == n:
                if lb < best_total or (lb == best_total and child < best_a):
                    best_a, best_total = child, lb
            else:
                open_children.append((child, lb))
        # reversed so the best-scored child is expanded first
        stack.extend(reversed(open_children))
    schedule = nl_powmu(expand_assignment(inst, best_a), inst.sys, eps=eps)
    return SelectionResult(best_a, schedule, nodes, time.perf_counter() - start)


METHODS = {
    "bba": bba,
    "enumerate": enumerate_optimal,
    "or": or_select,
    "criterion": criterion_select,
    "direct": direct_select,
}


def select(inst: NetworkInstance, method: str = "bba", eps: float = 1e-9) -> SelectionResult:
    """Run a named method and schedule its assignment."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    if method in ("bba", "enumerate"):
        return METHODS[method](inst, eps=eps)
    start = time.perf_counter()
    a = METHODS[method](inst)
    s = nl_powmu(expand_assignment(inst, a), inst.sys, eps=eps)
    return SelectionResult(a, s, 1, time.perf_counter() - start)


def assignment_total(inst: NetworkInstance, assignment, eps: float = 1e-9) -> float:
    return nl_powmu(expand_assignment(inst, assignment), inst.sys, eps=eps).total


__all__ = [
    "SelectionResult",
    "assignment_total",
    "bba",
    "criterion_scores",
    "criterion_select",
    "direct_select",
    "enumerate_optimal",
    "node_lower_bound",
    "node_upper_bound",
    "or_select",
    "select",
]
