"""Stable coalitions, the collaboration-equilibrium search and axiom checks."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Literal, Optional

from .graph import BenefitGraph, build_benefit_graph, condense
from .pareto import SearchConfig, SpoCache, SpoResult, ToleranceConfig, spo
from .tasks import ClientSet

if TYPE_CHECKING:
    from .oracle import MauOracle

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Partition:
    coalitions: tuple[frozenset, ...]
    # iteration (1-based) at which each coalition was frozen, aligned with `coalitions`
    provenance: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        blocks = [frozenset(c) for c in self.coalitions]
        if any(not b for b in blocks):
            raise ValueError("empty coalition in partition")
        seen: set = set()
        for b in blocks:
            if seen & b:
                raise ValueError(f"coalitions overlap on {sorted(seen & b)}")
            seen |= b
        prov = tuple(self.provenance) or (0,) * len(blocks)
        if len(prov) != len(blocks):
            raise ValueError("provenance must align with coalitions")
        order = sorted(range(len(blocks)), key=lambda k: min(blocks[k]))
        object.__setattr__(self, "coalitions", tuple(blocks[k] for k in order))
        object.__setattr__(self, "provenance", tuple(prov[k] for k in order))

    @classmethod
    def of(cls, *blocks: Iterable[int]) -> "Partition":
        return cls(tuple(frozenset(b) for b in blocks))

    @property
    def members(self) -> frozenset:
        return frozenset().union(*self.coalitions)

    def coalition_of(self, client_id: int) -> frozenset:
        for c in self.coalitions:
            if client_id in c:
                return c
        raise KeyError(client_id)

    def as_lists(self) -> list[list[int]]:
        return [sorted(c) for c in self.coalitions]

    def __iter__(self):
        return iter(self.coalitions)

    def __len__(self):
        return len(self.coalitions)


@dataclass
class EquilibriumReport:
    partition: Partition
    per_client_utility: dict[int, float]
    iterations: int
    benefit_graphs: list[BenefitGraph]
    mode: Literal["iterative", "fast"] = "iterative"
    per_client_val_utility: dict[int, float] = field(default_factory=dict)
    coalition_results: dict[int, SpoResult] = field(default_factory=dict, repr=False)
    stability_failures: list[tuple[int, frozenset]] = field(default_factory=list)


def stable_coalitions(graph: BenefitGraph) -> list[frozenset]:
    """SCCs with no incoming edge in the condensation, i.e. OCS(i) within C for all i in C."""
    cond = condense(graph)
    return [cond.components[k] for k in cond.sources()]


def _coalition_utilities(clients: ClientSet, partition: Partition, cfg, cache):
    results = {}
    for coalition in partition:
        members = [clients[j] for j in sorted(coalition)]
        for i in sorted(coalition):
            results[i] = spo(i, members, cfg, cache)
    return results


def _report(clients, partition, iterations, graphs, mode, cfg, cache, failures=()):
    results = _coalition_utilities(clients, partition, cfg, cache)
    return EquilibriumReport(
        partition=partition,
        per_client_utility={i: r.test_utility for i, r in sorted(results.items())},
        iterations=iterations,
        benefit_graphs=graphs,
        mode=mode,
        per_client_val_utility={i: r.val_utility for i, r in sorted(results.items())},
        coalition_results=dict(sorted(results.items())),
        stability_failures=list(failures),
    )


def find_equilibrium_iterative(
    clients: ClientSet,
    cfg: SearchConfig,
    tol: ToleranceConfig,
    cache: Optional[SpoCache] = None,
    verify_stability: bool = False,
) -> EquilibriumReport:
    """Freeze the stable coalitions of the benefit graph, drop them, rebuild, repeat.

    Utilities in later rounds are maximized over the clients still present.
    With ``verify_stability`` each frozen coalition is also checked
    numerically: every member's SPO utility inside the coalition must be within
    the margin of its utility over the remaining set.
    """
    if len(clients) == 0:
        raise ValueError("need at least one client")
    cache = cache if cache is not None else SpoCache()
    remaining = list(clients.ids)
    frozen: list[frozenset] = []
    provenance: list[int] = []
    graphs: list[BenefitGraph] = []
    failures: list[tuple[int, frozenset]] = []
    iteration = 0
    while remaining:
        iteration += 1
        graph = build_benefit_graph(clients.subset(remaining), cfg, tol, cache)
        graphs.append(graph)
        stable = stable_coalitions(graph)
        log.info("iteration %d: stable coalitions %s", iteration, [sorted(c) for c in stable])
        for coalition in stable:
            if verify_stability:
                members = [clients[j] for j in sorted(coalition)]
                for i in sorted(coalition):
                    inside = spo(i, members, cfg, cache).val_utility
                    best = graph.spo_results[i].val_utility
                    if inside < best - tol.delta(best):
                        failures.append((i, coalition))
            frozen.append(coalition)
            provenance.append(iteration)
        gone = frozenset().union(*stable)
        remaining = [i for i in remaining if i not in gone]
    partition = Partition(tuple(frozen), tuple(provenance))
    return _report(clients, partition, iteration, graphs, "iterative", cfg, cache, failures)


def find_equilibrium_fast(
    clients: ClientSet,
    cfg: SearchConfig,
    tol: ToleranceConfig,
    cache: Optional[SpoCache] = None,
) -> EquilibriumReport:
    """All SCCs of the initial benefit graph, valid when rebuilt graphs are induced subgraphs."""
    if len(clients) == 0:
        raise ValueError("need at least one client")
    cache = cache if cache is not None else SpoCache()
    graph = build_benefit_graph(clients, cfg, tol, cache)
    comps = condense(graph).components
    partition = Partition(tuple(comps), (1,) * len(comps))
    return _report(clients, partition, 1, [graph], "fast", cfg, cache)


def rebuilt_graphs_induced(report: EquilibriumReport) -> bool:
    """Whether each rebuilt graph of an iterative run is an induced subgraph of the first."""
    first = report.benefit_graphs[0]
    return all(g.edges == first.induced(g.nodes).edges for g in report.benefit_graphs[1:])


# -- axiom checks -------------------------------------------------------------


def _proper_subsets(coalition: frozenset):
    items = sorted(coalition)
    for r in range(1, len(items)):
        for combo in itertools.combinations(items, r):
            yield frozenset(combo)


def check_inner_agreement(partition: Partition, mau: "MauOracle") -> list[tuple[frozenset, frozenset]]:
    """``(C, C')`` pairs where no member of ``C'`` loses by splitting off from ``C``."""
    violations = []
    for coalition in partition:
        mau.require_size(len(coalition))
        for sub in _proper_subsets(coalition):
            objects = False
            for i in sorted(sub):
                whole = mau.value(i, coalition)
                if mau.value(i, sub) < whole - mau.tol.delta(whole):
                    objects = True
                    break
            if not objects:
                violations.append((coalition, sub))
    return violations


def check_outer_agreement(partition: Partition, mau: "MauOracle") -> list[frozenset]:
    """Candidate coalitions outside the partition where every member gains beyond the margin."""
    everyone = sorted(partition.members)
    mau.require_size(len(everyone))
    blocks = set(partition.coalitions)
    current = {i: mau.value(i, partition.coalition_of(i)) for i in everyone}
    violations = []
    for r in range(1, len(everyone) + 1):
        for combo in itertools.combinations(everyone, r):
            cand = frozenset(combo)
            if cand in blocks:
                continue
            if not any(mau.value(i, cand) <= current[i] + mau.tol.delta(current[i]) for i in combo):
                violations.append(cand)
    return violations
