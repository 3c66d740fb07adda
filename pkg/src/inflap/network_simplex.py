"""Primal network simplex for uncapacitated min-cost flow.

The basis is a spanning tree rooted at an artificial node; every real node starts
attached to the root by a big-M artificial arc.  Pricing uses block search over
the arc list, and the leaving arc is chosen by the strongly-feasible-tree rule
(last blocking arc around the cycle from the apex), which prevents cycling on
the highly degenerate transportation instances this is used for.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InfeasibleMarginals, NonConvergence

_UP, _DOWN = 1, -1  # tree arc points from node to parent / parent to node


@dataclass
class FlowSolution:
    flow: np.ndarray  # per real arc
    potential: np.ndarray  # per real node; reduced cost c - pi[s] + pi[t] >= 0
    cost: float
    pivots: int


def min_cost_flow(n_nodes: int, src: np.ndarray, dst: np.ndarray, cost: np.ndarray,
                  supply: np.ndarray, *, max_pivots: int | None = None,
                  tol: float | None = None) -> FlowSolution:
    """Solve ``min c.x`` s.t. flow conservation with node ``supply`` and ``x >= 0``.

    ``supply`` must sum to zero (within rounding).  Raises ``InfeasibleMarginals``
    if artificial flow remains at the optimum and ``NonConvergence`` if
    ``max_pivots`` is reached.
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    cost = np.asarray(cost, dtype=float)
    supply = np.asarray(supply, dtype=float)
    total = float(np.sum(np.abs(supply)))
    if abs(math.fsum(supply)) > 1e-9 * max(total, 1.0):
        raise InfeasibleMarginals(f"supplies do not balance (sum {math.fsum(supply):.3e})")

    n, m = n_nodes, len(src)
    root = n
    cmax = float(np.max(np.abs(cost))) if m else 1.0
    big_m = (n + 1) * max(cmax, 1.0) + 1.0
    tol = 1e-12 * max(cmax, 1.0) if tol is None else tol
    max_pivots = max_pivots or 50 * (n + m) + 1000

    # arcs m .. m+n-1 are artificial, one per node
    a_src = np.concatenate([src, np.empty(n, dtype=np.int64)])
    a_dst = np.concatenate([dst, np.empty(n, dtype=np.int64)])
    a_cost = np.concatenate([cost, np.full(n, big_m)])
    flow = np.zeros(m + n)
    parent = np.full(n + 1, -1, dtype=np.int64)
    pred = np.full(n + 1, -1, dtype=np.int64)
    pdir = np.zeros(n + 1, dtype=np.int64)
    depth = np.zeros(n + 1, dtype=np.int64)
    pi = np.zeros(n + 1)
    children: list[set] = [set() for _ in range(n + 1)]
    for i in range(n):
        e = m + i
        if supply[i] >= 0:
            a_src[e], a_dst[e], pdir[i], pi[i] = i, root, _UP, big_m
            flow[e] = supply[i]
        else:
            a_src[e], a_dst[e], pdir[i], pi[i] = root, i, _DOWN, -big_m
            flow[e] = -supply[i]
        parent[i], pred[i], depth[i] = root, e, 1
        children[root].add(i)

    # an eighth of the arcs per block: fewer pivots than sqrt-sized blocks and
    # still far cheaper per pivot than a full Dantzig scan
    block = max(64, (m + n) // 8)
    start = 0
    pivots = 0
    total_arcs = m + n
    while True:
        # block pricing: first block with a violating arc, most negative within it
        entering = -1
        scanned = 0
        while scanned < total_arcs:
            stop = min(start + block, total_arcs)
            rc = a_cost[start:stop] - pi[a_src[start:stop]] + pi[a_dst[start:stop]]
            k = int(np.argmin(rc))
            scanned += stop - start
            nxt = 0 if stop == total_arcs else stop
            if rc[k] < -tol:
                entering = start + k
                start = nxt
                break
            start = nxt
        if entering < 0:
            break
        pivots += 1
        if pivots > max_pivots:
            raise NonConvergence(f"network simplex exceeded {max_pivots} pivots")

        first, second = int(a_src[entering]), int(a_dst[entering])
        # apex of the cycle
        x, y = first, second
        while x != y:
            if depth[x] >= depth[y]:
                x = parent[x]
            else:
                y = parent[y]
        join = x

        delta = math.inf
        u_out, side = -1, 0
        x = first
        while x != join:
            if pdir[x] == _UP:
                d = flow[pred[x]]
                if d < delta:
                    delta, u_out, side = d, x, 1
            x = parent[x]
        x = second
        while x != join:
            if pdir[x] == _DOWN:
                d = flow[pred[x]]
                if d <= delta:
                    delta, u_out, side = d, x, 2
            x = parent[x]
        if u_out < 0:
            raise NonConvergence("unbounded cycle in network simplex")

        if delta > 0:
            flow[entering] += delta
            x = first
            while x != join:
                flow[pred[x]] += -delta if pdir[x] == _UP else delta
                x = parent[x]
            x = second
            while x != join:
                flow[pred[x]] += delta if pdir[x] == _UP else -delta
                x = parent[x]

        u_in, v_in = (first, second) if side == 1 else (second, first)
        rc_in = a_cost[entering] - pi[a_src[entering]] + pi[a_dst[entering]]
        shift = rc_in if u_in == a_src[entering] else -rc_in

        # reverse the tree path u_in -> u_out, then hang u_in below v_in
        path = [u_in]
        while path[-1] != u_out:
            path.append(int(parent[path[-1]]))
        old_pred = [int(pred[v]) for v in path]
        old_dir = [int(pdir[v]) for v in path]
        children[parent[u_out]].discard(u_out)
        for k in range(len(path) - 1):
            below, above = path[k], path[k + 1]
            children[above].discard(below)
            children[below].add(above)
            parent[above] = below
            pred[above] = old_pred[k]
            pdir[above] = -old_dir[k]
        parent[u_in] = v_in
        pred[u_in] = entering
        pdir[u_in] = _UP if a_src[entering] == u_in else _DOWN
        children[v_in].add(u_in)

        # potentials and depths of the moved subtree
        stack = [u_in]
        sub = []
        while stack:
            v = stack.pop()
            sub.append(v)
            stack.extend(children[v])
        sub = np.asarray(sub, dtype=np.int64)
        pi[sub] += shift
        for v in sub:
            depth[v] = depth[parent[v]] + 1

    if np.any(flow[m:] > 1e-9 * max(total, 1.0)):
        raise InfeasibleMarginals("no feasible flow satisfies the given supplies")
    flow_real = flow[:m]
    return FlowSolution(flow=flow_real, potential=pi[:n] - pi[root],
                        cost=math.fsum(flow_real * cost), pivots=pivots)
