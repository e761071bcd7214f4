"""Exact min-cost flow on a bipartite network (rows -> columns).

Successive shortest paths with Bellman-Ford on the residual graph, all
arithmetic in Fraction.  Arcs may be capacitated.  Ties are broken by
lowest node / arc index so results are reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence


class InfeasibleError(ValueError):
    """No flow meets the requested supplies and demands on the given arcs."""


@dataclass
class Arc:
    tail: int  # row index
    head: int  # column index
    cost: Fraction
    cap: Fraction | None = None  # None means uncapacitated
    flow: Fraction = Fraction(0)

    def residual(self) -> Fraction | None:
        return None if self.cap is None else self.cap - self.flow


class BipartiteFlow:
    def __init__(self, n_rows: int, n_cols: int, arcs: Sequence[tuple[int, int, Fraction, Fraction | None]]):
        self.n_rows = n_rows
        self.n_cols = n_cols
        self.arcs = [Arc(i, j, Fraction(c), None if cap is None else Fraction(cap)) for i, j, c, cap in arcs]

    @property
    def n_nodes(self) -> int:
        return self.n_rows + self.n_cols

    def _col(self, j: int) -> int:
        return self.n_rows + j

    def _residual_edges(self) -> list[tuple[int, int, Fraction, int, int]]:
        """(u, v, cost, arc index, direction) for every residual edge."""
        edges = []
        for k, a in enumerate(self.arcs):
            r = a.residual()
            if r is None or r > 0:
                edges.append((a.tail, self._col(a.head), a.cost, k, 1))
            if a.flow > 0:
                edges.append((self._col(a.head), a.tail, -a.cost, k, -1))
        return edges

    def _bellman_ford(self, sources: Sequence[int]) -> tuple[list, list]:
        dist: list[Fraction | None] = [None] * self.n_nodes
        pred: list[tuple[int, int] | None] = [None] * self.n_nodes
        for s in sources:
            dist[s] = Fraction(0)
        edges = self._residual_edges()
        for _ in range(self.n_nodes):
            changed = False
            for u, v, w, k, d in edges:
                du = dist[u]
                if du is None:
                    continue
                nd = du + w
                if dist[v] is None or nd < dist[v]:
                    dist[v] = nd
                    pred[v] = (k, d)
                    changed = True
            if not changed:
                return dist, pred
        raise RuntimeError("negative cycle in residual graph")

    def run(self, supply: Sequence[Fraction], demand: Sequence[Fraction]) -> None:
        excess = [Fraction(x) for x in supply]
        deficit = [Fraction(x) for x in demand]
        if sum(excess) != sum(deficit):
            raise InfeasibleError("total supply differs from total demand")
        while any(e > 0 for e in excess):
            sources = [i for i, e in enumerate(excess) if e > 0]
            dist, pred = self._bellman_ford(sources)
            best = None
            for j, dj in enumerate(deficit):
                if dj > 0 and dist[self._col(j)] is not None:
                    if best is None or dist[self._col(j)] < dist[self._col(best)]:
                        best = j
            if best is None:
                raise InfeasibleError("remaining supply cannot reach remaining demand")
            path = []
            v = self._col(best)
            while pred[v] is not None:
                k, d = pred[v]
                path.append((k, d))
                a = self.arcs[k]
                v = a.tail if d == 1 else self._col(a.head)
            src = v
            amount = min(excess[src], deficit[best])
            for k, d in path:
                a = self.arcs[k]
                room = a.residual() if d == 1 else a.flow
                if room is not None:
                    amount = min(amount, room)
            for k, d in path:
                self.arcs[k].flow += amount if d == 1 else -amount
            excess[src] -= amount
            deficit[best] -= amount

    def potentials(self) -> tuple[list[Fraction], list[Fraction]]:
        """Row/column potentials with phi_i + psi_j <= cost, equality on used arcs.

        Shortest distances d from a virtual root joined to every node give
        phi_i = -d(row i) and psi_j = d(column j); this needs the current
        flow to be optimal (no negative residual cycle).
        """
        dist, _ = self._bellman_ford(range(self.n_nodes))
        phi = [-dist[i] for i in range(self.n_rows)]
        psi = [dist[self._col(j)] for j in range(self.n_cols)]
        return phi, psi

    def cancel_support_cycles(self) -> None:
        """Push flow around cycles of the support until it is a forest.

        Only valid at optimality for uncapacitated arcs: every support arc is
        tight, so alternating cycle sums vanish and the cost is unchanged.
        """
        while True:
            cycle = self._find_support_cycle()
            if cycle is None:
                return
            plus = cycle[0::2]
            minus = cycle[1::2]
            delta = min(self.arcs[k].flow for k in minus)
            for k in plus:
                self.arcs[k].flow += delta
            for k in minus:
                self.arcs[k].flow -= delta

    def _find_support_cycle(self) -> list[int] | None:
        adj: dict[int, list[tuple[int, int]]] = {}
        for k, a in enumerate(self.arcs):
            if a.flow > 0:
                u, v = a.tail, self._col(a.head)
                adj.setdefault(u, []).append((v, k))
                adj.setdefault(v, []).append((u, k))
        seen: dict[int, tuple[int, int] | None] = {}
        depth: dict[int, int] = {}
        for root in sorted(adj):
            if root in seen:
                continue
            seen[root] = None
            depth[root] = 0
            stack = [root]
            while stack:
                u = stack.pop()
                for v, k in adj[u]:
                    if seen[u] is not None and seen[u][1] == k:
                        continue
                    if v not in seen:
                        seen[v] = (u, k)
                        depth[v] = depth[u] + 1
                        stack.append(v)
                    else:
                        return self._cycle_arcs(seen, depth, u, v, k)
        return None

    @staticmethod
    def _cycle_arcs(parent, depth, u, v, k) -> list[int]:
        # walk both endpoints up to their common ancestor
        left, right = [], []
        a, b = u, v
        while depth[a] > depth[b]:
            left.append(parent[a][1])
            a = parent[a][0]
        while depth[b] > depth[a]:
            right.append(parent[b][1])
            b = parent[b][0]
        while a != b:
            left.append(parent[a][1])
            a = parent[a][0]
            right.append(parent[b][1])
            b = parent[b][0]
        # cycle: v -> ... -> lca -> ... -> u -> v, as a closed walk of arcs
        return [k] + right + list(reversed(left))
