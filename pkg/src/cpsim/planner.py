"""Grid path planning on costmaps: anytime repairing A* and a Dijkstra oracle.

The search graph is the 8-connected grid over a Costmap. A cell is
traversable when its cost is below INSCRIBED (253). A diagonal move is
forbidden when both of its orthogonal neighbor cells are non-traversable.
Edge cost = base (straight 100 / diagonal 142) + cost_weight * cost(dest),
all integers so priority ordering is exact and runs are reproducible.

The diagonal base is 142, the smallest integer above 100 * sqrt(2): with
141 the Euclidean heuristic floor(100 * dist) would overestimate pure
diagonal paths and lose admissibility.

Hot loops are numba kernels over flat arrays; wrappers keep the public
API in plain Python objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .costmap import Costmap, CostConstants

Cell = tuple[int, int]

_INF = np.int64(2**62)

# Neighbor order: E, W, S, N, then diagonals. Fixed order keeps parent
# selection, and therefore returned paths, bit-for-bit reproducible.
_DX = np.array([1, -1, 0, 0, 1, 1, -1, -1], dtype=np.int64)
_DY = np.array([0, 0, 1, -1, 1, -1, 1, -1], dtype=np.int64)


class PlannerError(Exception):
    pass


class BlockedEndpointError(PlannerError):
    """Start or goal cell is not traversable."""


@dataclass(frozen=True)
class EdgeCostParams:
    cost_neutral: int = 100
    diagonal: int = 142
    cost_weight: int = 1

    def __post_init__(self):
        if min(self.cost_neutral, self.diagonal, self.cost_weight) <= 0:
            raise ValueError("edge cost parameters must be positive integers")


@dataclass(frozen=True)
class EpsilonSchedule:
    """Anytime schedule: start at eps_start, shrink by eps_step to eps_final."""

    eps_start: float = 3.0
    eps_final: float = 1.0
    eps_step: float = 0.5

    def __post_init__(self):
        if self.eps_final < 1.0:
            raise ValueError("eps_final must be >= 1")
        if self.eps_start < self.eps_final:
            raise ValueError("eps_start must be >= eps_final")
        if self.eps_step <= 0:
            raise ValueError("eps_step must be > 0")

    def values(self) -> list[float]:
        out = [self.eps_start]
        while out[-1] > self.eps_final:
            nxt = out[-1] - self.eps_step
            if nxt <= self.eps_final + 1e-12:
                nxt = self.eps_final
            out.append(nxt)
        return out


@dataclass(frozen=True)
class Plan:
    """A start..goal waypoint path with its audited cost and bound."""

    waypoints: tuple[Cell, ...]
    cost: int
    epsilon_bound: float
    expansions: int


@dataclass(frozen=True)
class AraStarResult:
    plans: tuple[Plan, ...]
    infeasible: bool
    expansions: int
    truncated: bool = False

    @property
    def best(self) -> Plan | None:
        return self.plans[-1] if self.plans else None


DEFAULT_EDGE_PARAMS = EdgeCostParams()
DEFAULT_SCHEDULE = EpsilonSchedule()


def is_traversable(cmap: Costmap, cell: Cell) -> bool:
    return cmap.in_bounds(cell) and cmap.cost_at(cell) < CostConstants.INSCRIBED


def edge_cost(from_cell: Cell, to_cell: Cell, cmap: Costmap,
              params: EdgeCostParams = DEFAULT_EDGE_PARAMS) -> int | None:
    """Cost of the directed move, or None when no edge exists.

    No edge when the destination is out of bounds or has cost >= INSCRIBED,
    when the cells are not 8-adjacent, or for a diagonal whose two
    orthogonal neighbors are both non-traversable.
    """
    dx = to_cell[0] - from_cell[0]
    dy = to_cell[1] - from_cell[1]
    if max(abs(dx), abs(dy)) != 1:
        return None
    if not is_traversable(cmap, to_cell):
        return None
    if dx != 0 and dy != 0:
        o1 = (from_cell[0] + dx, from_cell[1])
        o2 = (from_cell[0], from_cell[1] + dy)
        if not (is_traversable(cmap, o1) or is_traversable(cmap, o2)):
            return None
        base = params.diagonal
    else:
        base = params.cost_neutral
    return base + params.cost_weight * cmap.cost_at(to_cell)


def heuristic(cell: Cell, goal: Cell,
              params: EdgeCostParams = DEFAULT_EDGE_PARAMS) -> int:
    """floor(cost_neutral * Euclidean cell distance); admissible and
    consistent for the edge costs above."""
    dx = cell[0] - goal[0]
    dy = cell[1] - goal[1]
    return int(math.floor(params.cost_neutral * math.sqrt(dx * dx + dy * dy)))


def path_cost(waypoints, cmap: Costmap,
              params: EdgeCostParams = DEFAULT_EDGE_PARAMS) -> int:
    """Sum of edge costs along a waypoint sequence (raises on a non-edge)."""
    total = 0
    for a, b in zip(waypoints, waypoints[1:]):
        c = edge_cost(a, b, cmap, params)
        if c is None:
            raise PlannerError(f"no edge between {a} and {b}")
        total += c
    return total


def _heuristic_grid(width: int, height: int, goal: Cell,
                    params: EdgeCostParams) -> np.ndarray:
    xs = np.arange(width, dtype=np.int64)[None, :] - goal[0]
    ys = np.arange(height, dtype=np.int64)[:, None] - goal[1]
    d2 = (xs * xs + ys * ys).astype(np.float64)
    return np.floor(params.cost_neutral * np.sqrt(d2)).astype(np.int64).ravel()


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

_PACK_SHIFT = np.int64(24)
_PACK_MASK = np.int64((1 << 24) - 1)


@njit(cache=True)
def _int_heap_push(heap, size, key):
    heap[size] = key
    i = size
    while i > 0:
        p = (i - 1) >> 1
        if heap[p] <= heap[i]:
            break
        heap[p], heap[i] = heap[i], heap[p]
        i = p
    return size + 1


@njit(cache=True)
def _int_heap_pop(heap, size):
    root = heap[0]
    size -= 1
    heap[0] = heap[size]
    i = 0
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < size and heap[l] < heap[m]:
            m = l
        if r < size and heap[r] < heap[m]:
            m = r
        if m == i:
            break
        heap[m], heap[i] = heap[i], heap[m]
        i = m
    return root, size


@njit(cache=True)
def _dijkstra_kernel(costs, width, height, start, goal,
                     neutral, diag, weight, dist, parent, heap):
    """Exact Dijkstra over the costmap graph.

    Heap keys pack (distance, cell index) into one int64, so equal
    distances settle in ascending cell index order.
    """
    n = width * height
    for i in range(n):
        dist[i] = _INF
        parent[i] = -1
    settled = np.zeros(n, dtype=np.uint8)
    dist[start] = 0
    size = _int_heap_push(heap, 0, start)  # distance 0, index = start
    expansions = 0
    while size > 0:
        key, size = _int_heap_pop(heap, size)
        d = key >> _PACK_SHIFT
        s = key & _PACK_MASK
        if settled[s] == 1 or d != dist[s]:
            continue
        settled[s] = 1
        expansions += 1
        if s == goal:
            break
        sx = s % width
        sy = s // width
        for k in range(8):
            tx = sx + _DX[k]
            ty = sy + _DY[k]
            if tx < 0 or tx >= width or ty < 0 or ty >= height:
                continue
            t = ty * width + tx
            tc = np.int64(costs[t])
            if tc >= 253:
                continue
            if k >= 4:
                o1 = sy * width + tx
                o2 = ty * width + sx
                if costs[o1] >= 253 and costs[o2] >= 253:
                    continue
                base = diag
            else:
                base = neutral
            nd = dist[s] + base + weight * tc
            if nd < dist[t]:
                dist[t] = nd
                parent[t] = s
                size = _int_heap_push(heap, size, (nd << _PACK_SHIFT) | t)
    return expansions


@njit(cache=True)
def _lex_less(kf, kg, ki, a, b):
    if kf[a] != kf[b]:
        return kf[a] < kf[b]
    if kg[a] != kg[b]:
        return kg[a] < kg[b]
    return ki[a] < ki[b]


@njit(cache=True)
def _lex_heap_push(kf, kg, ki, size, f, g, i):
    kf[size] = f
    kg[size] = g
    ki[size] = i
    c = size
    while c > 0:
        p = (c - 1) >> 1
        if not _lex_less(kf, kg, ki, c, p):
            break
        kf[p], kf[c] = kf[c], kf[p]
        kg[p], kg[c] = kg[c], kg[p]
        ki[p], ki[c] = ki[c], ki[p]
        c = p
    return size + 1


@njit(cache=True)
def _lex_heap_pop(kf, kg, ki, size):
    f0, g0, i0 = kf[0], kg[0], ki[0]
    size -= 1
    kf[0] = kf[size]
    kg[0] = kg[size]
    ki[0] = ki[size]
    c = 0
    while True:
        l = 2 * c + 1
        r = l + 1
        m = c
        if l < size and _lex_less(kf, kg, ki, l, m):
            m = l
        if r < size and _lex_less(kf, kg, ki, r, m):
            m = r
        if m == c:
            break
        kf[m], kf[c] = kf[c], kf[m]
        kg[m], kg[c] = kg[c], kg[m]
        ki[m], ki[c] = ki[c], ki[m]
        c = m
    return f0, g0, i0, size


@njit(cache=True)
def _lex_heapify(kf, kg, ki, size):
    for c in range(size // 2 - 1, -1, -1):
        i = c
        while True:
            l = 2 * i + 1
            r = l + 1
            m = i
            if l < size and _lex_less(kf, kg, ki, l, m):
                m = l
            if r < size and _lex_less(kf, kg, ki, r, m):
                m = r
            if m == i:
                break
            kf[m], kf[i] = kf[i], kf[m]
            kg[m], kg[i] = kg[i], kg[m]
            ki[m], ki[i] = ki[i], ki[m]
            i = m


@njit(cache=True)
def _ara_improve(costs, width, height, eps, h, g, parent, closed,
                 in_open, in_incons, incons_buf, incons_n,
                 kf, kg, ki, heap_n, goal,
                 budget_left, neutral, diag, weight):
    """One ARA* ImprovePath pass.

    Expands states in (f, g, index) order until the goal's f-value is no
    worse than the best open key, the open list empties, or the expansion
    budget runs out. Rediscovered closed states go to the INCONS buffer.
    Returns (expansions, heap_n, incons_n, status) with status 0 =
    converged, 1 = open exhausted, 2 = budget exhausted.
    """
    expansions = 0
    status = 1
    while heap_n > 0:
        # Drop stale heap entries without expanding.
        top = ki[0]
        if closed[top] == 1 or kg[0] != g[top]:
            _f, _g, _i, heap_n = _lex_heap_pop(kf, kg, ki, heap_n)
            continue
        if np.float64(g[goal]) <= kf[0]:
            # f(goal) = g(goal) since h(goal) = 0; nothing open can beat it.
            status = 0
            break
        f0, g0, s, heap_n = _lex_heap_pop(kf, kg, ki, heap_n)
        closed[s] = 1
        in_open[s] = 0
        expansions += 1
        sx = s % width
        sy = s // width
        for k in range(8):
            tx = sx + _DX[k]
            ty = sy + _DY[k]
            if tx < 0 or tx >= width or ty < 0 or ty >= height:
                continue
            t = ty * width + tx
            tc = np.int64(costs[t])
            if tc >= 253:
                continue
            if k >= 4:
                o1 = sy * width + tx
                o2 = ty * width + sx
                if costs[o1] >= 253 and costs[o2] >= 253:
                    continue
                base = diag
            else:
                base = neutral
            ng = g[s] + base + weight * tc
            if ng < g[t]:
                g[t] = ng
                parent[t] = s
                if closed[t] == 0:
                    key = np.float64(ng) + eps * np.float64(h[t])
                    heap_n = _lex_heap_push(kf, kg, ki, heap_n, key, ng, t)
                    in_open[t] = 1
                elif in_incons[t] == 0:
                    in_incons[t] = 1
                    incons_buf[incons_n] = t
                    incons_n += 1
        if budget_left >= 0 and expansions >= budget_left:
            status = 2
            break
    return expansions, heap_n, incons_n, status


# ---------------------------------------------------------------------------
# public planners
# ---------------------------------------------------------------------------


def _flat(cmap: Costmap, cell: Cell) -> int:
    return cell[1] * cmap.width + cell[0]


def _check_endpoints(cmap: Costmap, start: Cell, goal: Cell,
                     allow_blocked_start: bool) -> None:
    for name, cell in (("start", start), ("goal", goal)):
        if not cmap.in_bounds(cell):
            raise PlannerError(f"{name} cell {cell} out of bounds")
    if not allow_blocked_start and not is_traversable(cmap, start):
        raise BlockedEndpointError(f"start cell {start} is blocked")
    if not is_traversable(cmap, goal):
        raise BlockedEndpointError(f"goal cell {goal} is blocked")


def _reconstruct(parent: np.ndarray, width: int, start: int,
                 goal: int) -> tuple[Cell, ...]:
    idxs = [goal]
    cur = goal
    limit = parent.shape[0] + 1
    while cur != start:
        cur = int(parent[cur])
        if cur < 0 or len(idxs) > limit:
            raise PlannerError("broken parent chain")
        idxs.append(cur)
    idxs.reverse()
    return tuple((i % width, i // width) for i in idxs)


def dijkstra_oracle(cmap: Costmap, start: Cell, goal: Cell,
                    params: EdgeCostParams = DEFAULT_EDGE_PARAMS) -> Plan | None:
    """Exact shortest path (ties: lower distance, then lower cell index).

    Returns None when the goal is unreachable; raises BlockedEndpointError
    when either endpoint sits on a blocked cell.
    """
    _check_endpoints(cmap, start, goal, allow_blocked_start=False)
    n = cmap.width * cmap.height
    if n >= 1 << int(_PACK_SHIFT):
        raise PlannerError("grid too large for packed heap keys")
    s, t = _flat(cmap, start), _flat(cmap, goal)
    if s == t:
        return Plan((start,), 0, 1.0, 0)
    dist = np.empty(n, dtype=np.int64)
    parent = np.empty(n, dtype=np.int64)
    heap = np.empty(9 * n + 8, dtype=np.int64)
    expansions = _dijkstra_kernel(
        cmap.costs.reshape(-1), cmap.width, cmap.height,
        np.int64(s), np.int64(t),
        np.int64(params.cost_neutral), np.int64(params.diagonal),
        np.int64(params.cost_weight), dist, parent, heap)
    if dist[t] >= _INF:
        return None
    waypoints = _reconstruct(parent, cmap.width, s, t)
    return Plan(waypoints, int(dist[t]), 1.0, int(expansions))


def shortest_path_costs(cmap: Costmap, start: Cell,
                        params: EdgeCostParams = DEFAULT_EDGE_PARAMS) -> np.ndarray:
    """Exact cost-to-reach grid (height, width); unreachable cells hold -1."""
    _check_endpoints(cmap, start, start, allow_blocked_start=False)
    n = cmap.width * cmap.height
    if n >= 1 << int(_PACK_SHIFT):
        raise PlannerError("grid too large for packed heap keys")
    dist = np.empty(n, dtype=np.int64)
    parent = np.empty(n, dtype=np.int64)
    heap = np.empty(9 * n + 8, dtype=np.int64)
    _dijkstra_kernel(
        cmap.costs.reshape(-1), cmap.width, cmap.height,
        np.int64(_flat(cmap, start)), np.int64(-1),
        np.int64(params.cost_neutral), np.int64(params.diagonal),
        np.int64(params.cost_weight), dist, parent, heap)
    out = dist.reshape(cmap.height, cmap.width).copy()
    out[out >= _INF] = -1
    return out


def ara_star(cmap: Costmap, start: Cell, goal: Cell,
             schedule: EpsilonSchedule = DEFAULT_SCHEDULE,
             budget: int | None = None,
             params: EdgeCostParams = DEFAULT_EDGE_PARAMS,
             allow_blocked_start: bool = False) -> AraStarResult:
    """Anytime repairing A* from start to goal.

    Runs one ImprovePath pass per epsilon in the schedule, reusing g-values
    and carrying locally inconsistent states forward. After each completed
    pass it publishes the current path with suboptimality bound

        eps' = min(eps, g(goal) / min over OPEN u INCONS of (g + h)),

    clamped so the published bounds never increase across iterations. The
    anytime loop stops early once the bound reaches 1 (the path is proven
    optimal). With a budget, passes that would exceed the total expansion
    count are cut off and no plan is published for the partial pass.

    allow_blocked_start permits planning out of a cell that inflation has
    swallowed; edges only check their destination, so the search is
    unaffected beyond skipping the start traversability check.
    """
    _check_endpoints(cmap, start, goal, allow_blocked_start)
    width, height = cmap.width, cmap.height
    n = width * height
    s, t = _flat(cmap, start), _flat(cmap, goal)
    if s == t:
        return AraStarResult((Plan((start,), 0, 1.0, 0),), False, 0)
    costs = cmap.costs.reshape(-1)
    h = _heuristic_grid(width, height, goal, params)

    g = np.full(n, _INF, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    closed = np.zeros(n, dtype=np.uint8)
    in_open = np.zeros(n, dtype=np.uint8)
    in_incons = np.zeros(n, dtype=np.uint8)
    incons_buf = np.empty(n, dtype=np.int64)
    cap = 9 * n + 8
    kf = np.empty(cap, dtype=np.float64)
    kg = np.empty(cap, dtype=np.int64)
    ki = np.empty(cap, dtype=np.int64)

    g[s] = 0
    in_open[s] = 1

    plans: list[Plan] = []
    total_exp = 0
    published = math.inf
    truncated = False
    infeasible = False

    for it, eps in enumerate(schedule.values()):
        if budget is not None and total_exp >= budget:
            truncated = True
            break
        members = np.flatnonzero((in_open | in_incons) != 0)
        if members.size == 0:
            break
        in_open[members] = 1
        in_incons[:] = 0
        closed[:] = 0
        m = members.size
        gm = g[members]
        kf[:m] = gm.astype(np.float64) + eps * h[members].astype(np.float64)
        kg[:m] = gm
        ki[:m] = members
        _lex_heapify(kf, kg, ki, m)

        budget_left = np.int64(-1 if budget is None else budget - total_exp)
        exp, _, incons_n, status = _ara_improve(
            costs, width, height, np.float64(eps), h, g, parent, closed,
            in_open, in_incons, incons_buf, np.int64(0),
            kf, kg, ki, np.int64(m), np.int64(t),
            budget_left, np.int64(params.cost_neutral),
            np.int64(params.diagonal), np.int64(params.cost_weight))
        total_exp += int(exp)

        if status == 2:
            truncated = True
            break
        if g[t] >= _INF:
            # Open list exhausted without touching the goal: no path exists.
            infeasible = it == 0
            break

        frontier = np.flatnonzero((in_open | in_incons) != 0)
        g_goal = int(g[t])
        if frontier.size == 0:
            eps_prime = 1.0
        else:
            fmin = int(np.min(g[frontier] + h[frontier]))
            eps_prime = 1.0 if g_goal <= fmin else min(eps, g_goal / fmin)
        eps_prime = max(1.0, eps_prime)
        published = min(published, eps_prime)

        waypoints = _reconstruct(parent, width, s, t)
        plans.append(Plan(waypoints, path_cost(waypoints, cmap, params),
                          published, total_exp))
        if published <= 1.0:
            break

    return AraStarResult(tuple(plans), infeasible, total_exp, truncated)
