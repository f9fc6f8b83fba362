"""Brute-force references for small instances.

Everything here is exponential in the number of clients and guarded by
explicit size caps.
"""
from __future__ import annotations

import itertools
import math
import threading
from dataclasses import replace
from typing import Callable, Iterable, Iterator, Optional

import numpy as np

from .equilibrium import Partition, check_inner_agreement, check_outer_agreement
from .errors import BudgetError
from .graph import BenefitGraph
from .pareto import SearchConfig, SpoCache, ToleranceConfig, spo
from .tasks import ClientSet

ORACLE_GRID_RESOLUTION = 20


def _key(ids: Iterable[int]) -> tuple[int, ...]:
    return tuple(sorted(ids))


def oracle_search_config(cfg: Optional[SearchConfig], n_clients: int) -> SearchConfig:
    """``cfg`` forced onto an exhaustive grid with no refinement."""
    if cfg is None:
        cfg = SearchConfig(grid_resolution=ORACLE_GRID_RESOLUTION)
    need = math.comb(cfg.grid_resolution + n_clients - 1, n_clients - 1)
    return replace(cfg, sample_budget=max(cfg.sample_budget, need), refine_steps=0)


class MauOracle:
    """Maximum achievable utility over every subset, memoized per ``(client, subset)``.

    ``utility_fn(target, subset)`` gives the utility of ``target`` trained with
    exactly ``subset``; use :meth:`from_clients` to back it with grid SPO.
    """

    def __init__(
        self,
        members: Iterable[int],
        utility_fn: Callable[[int, frozenset], float],
        tol: ToleranceConfig = ToleranceConfig(),
        cap: int = 8,
        memo: bool = True,
    ):
        self.members = frozenset(members)
        self.utility_fn = utility_fn
        self.tol = tol
        self.cap = cap
        self.memo = memo
        self._u: dict = {}
        self._mau: dict = {}
        self._lock = threading.Lock()

    @classmethod
    def from_clients(
        cls,
        clients: ClientSet,
        cfg: Optional[SearchConfig] = None,
        tol: ToleranceConfig = ToleranceConfig(),
        cache: Optional[SpoCache] = None,
        cap: int = 8,
        memo: bool = True,
    ) -> "MauOracle":
        if len(clients) > cap:
            raise BudgetError(f"{len(clients)} clients exceeds the oracle cap of {cap}")
        search = oracle_search_config(cfg, len(clients))
        cache = cache if cache is not None else SpoCache()

        def utility_fn(target, subset):
            return spo(target, [clients[j] for j in sorted(subset)], search, cache).val_utility

        oracle = cls(clients.ids, utility_fn, tol, cap, memo)
        oracle.search_config = search
        return oracle

    def require_size(self, n: int) -> None:
        if n > self.cap:
            raise BudgetError(f"subset of size {n} exceeds the oracle cap of {self.cap}")

    def _remember(self, table: dict, key, compute):
        if not self.memo:
            return compute()
        with self._lock:
            if key in table:
                return table[key]
        value = compute()
        with self._lock:
            return table.setdefault(key, value)

    def utility(self, target: int, subset: Iterable[int]) -> float:
        key = (target, _key(subset))
        return self._remember(self._u, key, lambda: float(self.utility_fn(target, frozenset(key[1]))))

    def mau(self, target: int, subset: Iterable[int]) -> tuple[float, frozenset]:
        subset = frozenset(subset)
        if target not in subset:
            raise ValueError(f"target {target} not in {sorted(subset)}")
        self.require_size(len(subset))
        key = (target, _key(subset))
        return self._remember(self._mau, key, lambda: self._mau_uncached(target, subset))

    def _mau_uncached(self, target, subset):
        others = sorted(subset - {target})
        best_key, best_set = None, None
        for r in range(len(others) + 1):
            for combo in itertools.combinations(others, r):
                cand = frozenset((target,) + combo)
                u = self.utility(target, cand)
                # larger utility first, then fewer members, then lexicographic ids
                k = (-u, len(cand), _key(cand))
                if best_key is None or k < best_key:
                    best_key, best_set = k, cand
        return -best_key[0], best_set

    def value(self, target: int, subset: Iterable[int]) -> float:
        return self.mau(target, subset)[0]


def mau_bruteforce(target: int, subset: Iterable[int], oracle: MauOracle) -> tuple[float, frozenset]:
    """Best utility over subsets containing ``target`` and the smallest subset attaining it."""
    return oracle.mau(target, subset)


def ocs_bruteforce(target: int, clients: Iterable[int], oracle: MauOracle) -> frozenset:
    """Smallest subset whose utility comes within the margin of the MAU.

    Among qualifying subsets of that size the one with the higher utility wins,
    then the lexicographically smallest.
    """
    clients = frozenset(clients)
    oracle.require_size(len(clients))
    best, _ = oracle.mau(target, clients)
    floor = best - oracle.tol.delta(best)
    others = sorted(clients - {target})
    for r in range(len(others) + 1):
        hits = []
        for combo in itertools.combinations(others, r):
            cand = frozenset((target,) + combo)
            u = oracle.utility(target, cand)
            if u >= floor:
                hits.append((-u, _key(cand), cand))
        if hits:
            return min(hits)[2]
    raise AssertionError("unreachable: the MAU set itself qualifies")


def enumerate_partitions(n: int, max_n: int = 10) -> Iterator[Partition]:
    """Every set partition of ``{0..n-1}`` exactly once, via restricted growth strings."""
    if n > max_n:
        raise BudgetError(f"refusing to enumerate partitions of {n} > {max_n} elements")
    if n < 1:
        raise ValueError("n must be >= 1")
    codes = [0] * n
    maxes = [0] * n  # maxes[k] = max(codes[:k + 1])
    while True:
        blocks: dict[int, list[int]] = {}
        for elem, b in enumerate(codes):
            blocks.setdefault(b, []).append(elem)
        yield Partition(tuple(frozenset(v) for v in blocks.values()))
        k = n - 1
        while k > 0 and codes[k] > maxes[k - 1]:
            k -= 1
        if k == 0:
            return
        codes[k] += 1
        maxes[k] = max(maxes[k - 1], codes[k])
        for j in range(k + 1, n):
            codes[j] = 0
            maxes[j] = maxes[k]


def partitions_of(ids: Iterable[int]) -> Iterator[Partition]:
    ids = sorted(ids)
    for p in enumerate_partitions(len(ids)):
        yield Partition(tuple(frozenset(ids[k] for k in block) for block in p))


def ce_bruteforce(clients: ClientSet | Iterable[int], oracle: MauOracle, max_n: int = 6) -> list[Partition]:
    """Every partition that passes both agreement axioms."""
    ids = clients.ids if isinstance(clients, ClientSet) else tuple(clients)
    if len(ids) > max_n:
        raise BudgetError(f"{len(ids)} clients exceeds the CE enumeration cap of {max_n}")
    return [
        p for p in partitions_of(ids)
        if not check_inner_agreement(p, oracle) and not check_outer_agreement(p, oracle)
    ]


def scc_bruteforce(graph: BenefitGraph) -> list[frozenset]:
    """Components from the transitive closure: ``i ~ j`` iff each reaches the other."""
    nodes = list(graph.nodes)
    pos = {v: k for k, v in enumerate(nodes)}
    n = len(nodes)
    reach = np.eye(n, dtype=bool)
    for j, i in graph.edges:
        reach[pos[j], pos[i]] = True
    for k in range(n):
        reach |= reach[:, [k]] & reach[[k], :]
    mutual = reach & reach.T
    comps, seen = [], set()
    for a in range(n):
        if a in seen:
            continue
        group = {b for b in range(n) if mutual[a, b]}
        seen |= group
        comps.append(frozenset(nodes[b] for b in group))
    return sorted(comps, key=min)
