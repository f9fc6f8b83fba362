"""Benefit graphs and their strongly connected components.

An edge ``j -> i`` means client ``j`` belongs to the optimal collaborator set
of client ``i``. Self-membership lives only in ``ocs_map``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Optional

from ._parallel import parallel_map
from .pareto import SearchConfig, SpoCache, SpoResult, ToleranceConfig, extract_ocs, spo
from .tasks import ClientSet


@dataclass(frozen=True)
class BenefitGraph:
    nodes: tuple[int, ...]
    ocs_map: Mapping[int, frozenset]
    spo_results: Mapping[int, SpoResult] = field(
        default_factory=lambda: MappingProxyType({}), compare=False, repr=False
    )

    def __post_init__(self):
        nodes = tuple(sorted(self.nodes))
        if set(self.ocs_map) != set(nodes):
            raise ValueError("ocs_map keys must equal the node set")
        node_set = set(nodes)
        ocs = {}
        for i in nodes:
            members = frozenset(self.ocs_map[i]) | {i}
            if not members <= node_set:
                raise ValueError(f"OCS of {i} references unknown nodes {sorted(members - node_set)}")
            ocs[i] = members
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "ocs_map", MappingProxyType(ocs))
        object.__setattr__(self, "spo_results", MappingProxyType(dict(self.spo_results)))

    @classmethod
    def from_ocs_map(cls, ocs_map: Mapping[int, Iterable[int]], spo_results=None) -> "BenefitGraph":
        return cls(tuple(ocs_map), {i: frozenset(s) for i, s in ocs_map.items()}, spo_results or {})

    @classmethod
    def from_edges(cls, nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> "BenefitGraph":
        ocs = {i: {i} for i in nodes}
        for j, i in edges:
            ocs[i].add(j)
        return cls.from_ocs_map(ocs)

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return tuple(sorted((j, i) for i in self.nodes for j in self.ocs_map[i] if j != i))

    def successors(self, j: int) -> tuple[int, ...]:
        return tuple(i for i in self.nodes if i != j and j in self.ocs_map[i])

    def predecessors(self, i: int) -> tuple[int, ...]:
        return tuple(sorted(self.ocs_map[i] - {i}))

    def induced(self, keep: Iterable[int]) -> "BenefitGraph":
        keep = frozenset(keep)
        return BenefitGraph.from_ocs_map({i: self.ocs_map[i] & keep for i in self.nodes if i in keep})


@dataclass(frozen=True)
class Condensation:
    components: tuple[frozenset, ...]
    dag_edges: tuple[tuple[int, int], ...]

    def component_of(self, node: int) -> int:
        for k, comp in enumerate(self.components):
            if node in comp:
                return k
        raise KeyError(node)

    def sources(self) -> tuple[int, ...]:
        has_incoming = {b for _, b in self.dag_edges}
        return tuple(k for k in range(len(self.components)) if k not in has_incoming)


def build_benefit_graph(
    clients: ClientSet,
    cfg: SearchConfig,
    tol: ToleranceConfig,
    cache: Optional[SpoCache] = None,
) -> BenefitGraph:
    """Run SPO and OCS extraction for every client over the whole set."""
    if len(clients) == 0:
        raise ValueError("need at least one client")
    members = list(clients)
    cache = cache if cache is not None else SpoCache()

    def one(client):
        result = spo(client.id, members, cfg, cache)
        return client.id, result, extract_ocs(result, members, cfg, tol, cache)

    rows = parallel_map(one, members)
    return BenefitGraph(
        tuple(i for i, _, _ in rows),
        {i: ocs for i, _, ocs in rows},
        {i: res for i, res, _ in rows},
    )


def tarjan_scc(graph: BenefitGraph) -> list[frozenset]:
    """Strongly connected components, sorted by smallest member.

    Iterative Tarjan: an explicit stack of ``(node, successor iterator)``
    frames replaces recursion.
    """
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    out: list[frozenset] = []
    counter = 0
    succ = {v: graph.successors(v) for v in graph.nodes}

    for root in graph.nodes:
        if root in index:
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        work = [(root, iter(succ[root]))]
        while work:
            v, it = work[-1]
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ[w])))
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            else:
                work.pop()
                if work:
                    parent = work[-1][0]
                    low[parent] = min(low[parent], low[v])
                if low[v] == index[v]:
                    comp = set()
                    while True:
                        w = stack.pop()
                        on_stack.discard(w)
                        comp.add(w)
                        if w == v:
                            break
                    out.append(frozenset(comp))
    return sorted(out, key=min)


def condense(graph: BenefitGraph) -> Condensation:
    comps = tarjan_scc(graph)
    where = {v: k for k, comp in enumerate(comps) for v in comp}
    dag = {(where[j], where[i]) for j, i in graph.edges if where[j] != where[i]}
    return Condensation(tuple(comps), tuple(sorted(dag)))


def topological_order(cond: Condensation) -> list[int]:
    """Kahn's algorithm over component indices; raises if a cycle survives."""
    n = len(cond.components)
    indeg = [0] * n
    out: dict[int, list[int]] = {k: [] for k in range(n)}
    for a, b in cond.dag_edges:
        indeg[b] += 1
        out[a].append(b)
    ready = [k for k in range(n) if indeg[k] == 0]
    order = []
    while ready:
        k = ready.pop(0)
        order.append(k)
        for b in out[k]:
            indeg[b] -= 1
            if indeg[b] == 0:
                ready.append(b)
    if len(order) != n:
        raise ValueError("condensation contains a cycle")
    return order
