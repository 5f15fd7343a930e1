"""Reference planners: D* Lite, class-ordered A*, and rule-based relaxation.

D* Lite repairs its shortest path incrementally as cell labels change and
is driven with per-cell traversal costs derived from demonstrations. COA*
minimizes a lexicographic vector of per-class cell counts before length.
RCR greedily relaxes the cheapest-scored soft region adjacent to the
reachable set until a path exists.

All three share the grid geometry of the main planner: 8-connected moves,
no corner cutting through blocked cells.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDemos, NoPath
from .search import free_mask, grid_astar
from .semantic_map import RegionClass, SemanticGrid
from .superpixel import Segmentation, project_path

_DIAG = math.sqrt(2.0)
_MOVES = ((0, 1, 1.0), (1, 0, 1.0), (0, -1, 1.0), (-1, 0, 1.0),
          (1, 1, _DIAG), (1, -1, _DIAG), (-1, 1, _DIAG), (-1, -1, _DIAG))

COST_EPS = 1e-3


@dataclass(frozen=True)
class LabelCostTable:
    """Per-label traversal cost in [0, 1]; hard labels are impassable."""

    costs: dict  # label index -> cost (np.inf for hard)
    derivation: str = "manual"

    def per_cell(self, grid: SemanticGrid) -> np.ndarray:
        arr = np.array([self.costs.get(i, np.inf)
                        for i in range(grid.n_labels)])
        return arr[grid.labels]


@dataclass(frozen=True)
class ClassOrder:
    """Total preference order over traversable labels, best first."""

    order: tuple  # label indices

    def rank(self, label: int) -> int:
        return self.order.index(label)


def _traversed_label_counts(demos, seg: Segmentation) -> dict:
    counts = {}
    total = 0
    for demo in demos:
        for rid in project_path(seg, demo.polyline):
            lab = int(seg.region_labels[rid])
            counts[lab] = counts.get(lab, 0) + 1
            total += 1
    return counts, total


def derive_costs(demos, seg: Segmentation, grid: SemanticGrid,
                 eps: float = COST_EPS) -> LabelCostTable:
    """Traversal costs from the reciprocal proportion of demo-traversed
    superpixels per label, min-max scaled over soft labels; free labels
    pin to 0, hard to impassable, never-traversed soft labels to 1."""
    if not demos:
        raise EmptyDemos("derive_costs needs demonstrations")
    counts, total = _traversed_label_counts(demos, seg)
    costs = {}
    soft_raw = {}
    for i, (_, cls) in enumerate(grid.label_table):
        if cls == RegionClass.HARD:
            costs[i] = np.inf
        elif cls == RegionClass.FREE:
            costs[i] = 0.0
        else:
            p = counts.get(i, 0) / total if total else 0.0
            soft_raw[i] = 1.0 / max(p, eps)
    if soft_raw:
        lo, hi = min(soft_raw.values()), max(soft_raw.values())
        for i, raw in soft_raw.items():
            costs[i] = (raw - lo) / (hi - lo) if hi > lo else 1.0
    return LabelCostTable(costs=costs, derivation="demo_frequency")


def class_order_from_demos(demos, seg: Segmentation,
                           grid: SemanticGrid) -> ClassOrder:
    """Preference order by descending demonstration traversal frequency."""
    if not demos:
        raise EmptyDemos("class order needs demonstrations")
    counts, _ = _traversed_label_counts(demos, seg)
    traversable = [i for i, (_, cls) in enumerate(grid.label_table)
                   if cls != RegionClass.HARD]
    traversable.sort(key=lambda i: (-counts.get(i, 0), i))
    return ClassOrder(order=tuple(traversable))


# --------------------------------------------------------------------------
# D* Lite
# --------------------------------------------------------------------------


class DStarLite:
    """Incremental shortest-path planner over per-cell label costs.

    Transit cost into a cell is 1 + cost(label) regardless of direction;
    the Chebyshev cell distance is an admissible, consistent heuristic for
    that model. Searches from the goal so the start may move.
    """

    def __init__(self, grid: SemanticGrid, costs: LabelCostTable,
                 start, goal):
        self.h_cells, self.w_cells = grid.labels.shape
        self.costs = costs
        self.cell_cost = costs.per_cell(grid)
        self.start = grid.cell_of(start)
        self.goal = grid.cell_of(goal)
        if not self._passable(*self.start) or not self._passable(*self.goal):
            raise NoPath("start or goal not traversable")
        n = self.h_cells * self.w_cells
        self.g = np.full(n, np.inf)
        self.rhs = np.full(n, np.inf)
        self.rhs[self._flat(*self.goal)] = 0.0
        self.km = 0.0
        self.queue = []
        self.entry = itertools.count()
        self.key_of = {}
        self.expansions = 0
        self.resolution = grid.resolution
        self._push(self._flat(*self.goal))
        self.grid = grid

    # -- plumbing -----------------------------------------------------------

    def _flat(self, r, c) -> int:
        return r * self.w_cells + c

    def _passable(self, r, c) -> bool:
        return bool(np.isfinite(self.cell_cost[r, c]))

    def _h(self, flat: int) -> float:
        r, c = divmod(flat, self.w_cells)
        sr, sc = self.start
        return max(abs(r - sr), abs(c - sc))

    def _key(self, flat: int):
        m = min(self.g[flat], self.rhs[flat])
        return (m + self._h(flat) + self.km, m)

    def _push(self, flat: int):
        key = self._key(flat)
        self.key_of[flat] = key
        heapq.heappush(self.queue, (key, next(self.entry), flat))

    def _neighbors(self, flat: int):
        r, c = divmod(flat, self.w_cells)
        for dr, dc, _ in _MOVES:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < self.h_cells and 0 <= nc < self.w_cells):
                continue
            if not self._passable(nr, nc):
                continue
            if dr != 0 and dc != 0 and not (
                    self._passable(r, nc) and self._passable(nr, c)):
                continue
            yield self._flat(nr, nc)

    def _transit(self, to_flat: int) -> float:
        r, c = divmod(to_flat, self.w_cells)
        return 1.0 + float(self.cell_cost[r, c])

    def _update_vertex(self, flat: int):
        if flat != self._flat(*self.goal):
            best = np.inf
            if self._passable(*divmod(flat, self.w_cells)):
                for s in self._neighbors(flat):
                    best = min(best, self._transit(s) + self.g[s])
            self.rhs[flat] = best
        self.key_of.pop(flat, None)
        if self.g[flat] != self.rhs[flat]:
            self._push(flat)

    def _top_key(self):
        while self.queue:
            key, _, flat = self.queue[0]
            if self.key_of.get(flat) != key:
                heapq.heappop(self.queue)  # stale
                continue
            return key
        return (np.inf, np.inf)

    def compute_shortest_path(self):
        s_flat = self._flat(*self.start)
        while (self._top_key() < self._key(s_flat)
               or self.rhs[s_flat] != self.g[s_flat]):
            key, _, u = heapq.heappop(self.queue)
            if self.key_of.get(u) != key:
                continue
            del self.key_of[u]
            self.expansions += 1
            k_new = self._key(u)
            if key < k_new:
                self.key_of[u] = k_new
                heapq.heappush(self.queue, (k_new, next(self.entry), u))
            elif self.g[u] > self.rhs[u]:
                self.g[u] = self.rhs[u]
                for s in self._neighbors(u):
                    self._update_vertex(s)
            else:
                self.g[u] = np.inf
                self._update_vertex(u)
                for s in self._neighbors(u):
                    self._update_vertex(s)

    # -- public -------------------------------------------------------------

    def move_start(self, grid: SemanticGrid, pos):
        new_start = grid.cell_of(pos)
        if new_start != self.start:
            self.km += max(abs(new_start[0] - self.start[0]),
                           abs(new_start[1] - self.start[1]))
            self.start = new_start

    def replan(self, grid: SemanticGrid, changed_cells) -> list:
        """Repair after the given (row, col) cells changed label."""
        self.grid = grid
        self.cell_cost = self.costs.per_cell(grid)
        touched = set()
        for (r, c) in changed_cells:
            touched.add((r, c))
            for dr, dc, _ in _MOVES:
                nr, nc = r + dr, c + dc
                if 0 <= nr < self.h_cells and 0 <= nc < self.w_cells:
                    touched.add((nr, nc))
        for (r, c) in sorted(touched):
            self._update_vertex(self._flat(r, c))
        return self.plan()

    def plan(self) -> list:
        """(Re)compute and extract the current path as a cell-center
        polyline from start to goal."""
        self.compute_shortest_path()
        s_flat = self._flat(*self.start)
        if not np.isfinite(self.rhs[s_flat]):
            raise NoPath("goal unreachable under current costs")
        path = [self.start]
        u = s_flat
        goal_flat = self._flat(*self.goal)
        guard = self.h_cells * self.w_cells
        while u != goal_flat and guard > 0:
            guard -= 1
            best, best_s = np.inf, None
            for s in self._neighbors(u):
                v = self._transit(s) + self.g[s]
                if v < best:
                    best, best_s = v, s
            if best_s is None or not np.isfinite(best):
                raise NoPath("path extraction hit a dead end")
            u = best_s
            path.append(divmod(u, self.w_cells))
        res = self.resolution
        return [((c + 0.5) * res, (r + 0.5) * res) for (r, c) in path]

    def path_cost(self) -> float:
        self.compute_shortest_path()
        return float(self.rhs[self._flat(*self.start)])


def weighted_astar_cost(grid: SemanticGrid, costs: LabelCostTable,
                        start, goal) -> float:
    """From-scratch optimal cost under the D* Lite transit model (oracle)."""
    cell_cost = costs.per_cell(grid)
    h_cells, w_cells = grid.labels.shape
    sr, sc = grid.cell_of(start)
    gr, gc = grid.cell_of(goal)
    passable = np.isfinite(cell_cost)
    if not passable[sr, sc] or not passable[gr, gc]:
        raise NoPath("start or goal not traversable")
    gval = np.full((h_cells, w_cells), np.inf)
    gval[sr, sc] = 0.0
    heap = [(float(max(abs(sr - gr), abs(sc - gc))), sr * w_cells + sc)]
    closed = np.zeros((h_cells, w_cells), dtype=bool)
    while heap:
        _, flat = heapq.heappop(heap)
        r, c = divmod(flat, w_cells)
        if closed[r, c]:
            continue
        closed[r, c] = True
        if (r, c) == (gr, gc):
            return float(gval[r, c])
        for dr, dc, _ in _MOVES:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h_cells and 0 <= nc < w_cells):
                continue
            if not passable[nr, nc]:
                continue
            if dr != 0 and dc != 0 and not (passable[r, nc] and passable[nr, c]):
                continue
            ng = gval[r, c] + 1.0 + float(cell_cost[nr, nc])
            if ng < gval[nr, nc]:
                gval[nr, nc] = ng
                heapq.heappush(heap, (ng + max(abs(nr - gr), abs(nc - gc)),
                                      nr * w_cells + nc))
    raise NoPath("goal unreachable")


# --------------------------------------------------------------------------
# class-ordered A*
# --------------------------------------------------------------------------


def coa_star(grid: SemanticGrid, order: ClassOrder, start, goal) -> list:
    """Lexicographically minimal path: fewest worst-class cells first, then
    the next class, ..., then Euclidean length.

    Costs are exact tuples (per-class transit counts worst-first, then
    length), so the ordering never saturates float precision.
    """
    labels = grid.labels
    h_cells, w_cells = labels.shape
    res = grid.resolution
    n_ranked = len(order.order)
    slot = {lab: n_ranked - 1 - order.rank(lab) for lab in order.order}
    passable = np.zeros(labels.shape, dtype=bool)
    for lab in order.order:
        passable |= labels == lab
    sr, sc = grid.cell_of(start)
    gr, gc = grid.cell_of(goal)
    if not passable[sr, sc] or not passable[gr, gc]:
        raise NoPath("start or goal not traversable")

    zero = (0,) * n_ranked
    start_flat = sr * w_cells + sc
    best = {start_flat: (zero, 0.0)}
    parent = {start_flat: -1}

    def octile(r, c):
        dr, dc = abs(r - gr), abs(c - gc)
        return ((max(dr, dc) - min(dr, dc)) + _DIAG * min(dr, dc)) * res

    counter = itertools.count()
    heap = [(zero, octile(sr, sc), next(counter), start_flat)]
    closed = set()
    while heap:
        f_counts, f_len, _, flat = heapq.heappop(heap)
        if flat in closed:
            continue
        closed.add(flat)
        if flat == gr * w_cells + gc:
            cells = []
            u = flat
            while u != -1:
                cells.append(divmod(u, w_cells))
                u = parent[u]
            cells.reverse()
            return [grid.cell_center(r, c) for (r, c) in cells]
        g_counts, g_len = best[flat]
        r, c = divmod(flat, w_cells)
        for dr, dc, step in _MOVES:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h_cells and 0 <= nc < w_cells):
                continue
            if not passable[nr, nc]:
                continue
            if dr != 0 and dc != 0 and not (passable[r, nc] and passable[nr, c]):
                continue
            s = slot[int(labels[nr, nc])]
            ncounts = g_counts[:s] + (g_counts[s] + 1,) + g_counts[s + 1:]
            nlen = g_len + step * res
            nflat = nr * w_cells + nc
            cur = best.get(nflat)
            if cur is None or (ncounts, nlen) < cur:
                best[nflat] = (ncounts, nlen)
                parent[nflat] = flat
                heapq.heappush(heap, (ncounts, nlen + octile(nr, nc),
                                      next(counter), nflat))
    raise NoPath("goal unreachable for the given class order")


# --------------------------------------------------------------------------
# rule-based constraint relaxation
# --------------------------------------------------------------------------


def _reachable(mask: np.ndarray, start_cell) -> np.ndarray:
    """Cells reachable from start under 8-connected no-corner-cut moves."""
    h_cells, w_cells = mask.shape
    seen = np.zeros_like(mask)
    if not mask[start_cell]:
        return seen
    dq = deque([start_cell])
    seen[start_cell] = True
    while dq:
        r, c = dq.popleft()
        for dr, dc, _ in _MOVES:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h_cells and 0 <= nc < w_cells):
                continue
            if seen[nr, nc] or not mask[nr, nc]:
                continue
            if dr != 0 and dc != 0 and not (mask[r, nc] and mask[nr, c]):
                continue
            seen[nr, nc] = True
            dq.append((nr, nc))
    return seen


def rcr_plan(grid: SemanticGrid, seg: Segmentation, risk_map: dict,
             start, goal, alpha: float = 0.5, beta: float = 0.5):
    """Greedy relaxation: while no path exists, relax the soft region with
    the lowest alpha*risk + beta*(goal distance / map diagonal) among those
    adjacent to the currently reachable set.

    Returns (polyline, relaxed region id set).
    """
    classes = np.array([grid.label_table[l][1] for l in seg.region_labels])
    soft_ids = [i for i in range(seg.n_regions)
                if classes[i] == RegionClass.SOFT]
    diag = math.hypot(grid.width * grid.resolution,
                      grid.height * grid.resolution)
    gx, gy = goal
    risk_of = {}
    score = {}
    for rid in soft_ids:
        name = grid.label_table[int(seg.region_labels[rid])][0]
        risk_of[rid] = float(risk_map.get(name, 1.0))
        cx, cy = seg.centroid_m(rid)
        score[rid] = (alpha * risk_of[rid]
                      + beta * math.hypot(cx - gx, cy - gy) / diag)

    relaxed = set()
    base = free_mask(grid)
    start_cell = grid.cell_of(start)
    if not base[start_cell]:
        # standing inside a soft region counts as having relaxed it
        rid = int(seg.assignment[start_cell])
        if rid >= 0:
            relaxed.add(rid)
    while True:
        allowed = base.copy()
        for rid in relaxed:
            rows, cols = seg.region_cells[rid]
            allowed[rows, cols] = True
        try:
            poly = grid_astar(grid, allowed, start, goal)
            return poly, relaxed
        except NoPath:
            pass
        reach = _reachable(allowed, start_cell)
        candidates = []
        for rid in soft_ids:
            if rid in relaxed:
                continue
            rows, cols = seg.region_cells[rid]
            adj = False
            for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0)):
                rr, cc = rows + dr, cols + dc
                ok = (rr >= 0) & (rr < reach.shape[0]) & (cc >= 0) & (cc < reach.shape[1])
                if reach[rr[ok], cc[ok]].any():
                    adj = True
                    break
            if adj:
                candidates.append(rid)
        if not candidates:
            raise NoPath("all adjacent soft regions relaxed, still blocked")
        pick = min(candidates, key=lambda rid: (score[rid], rid))
        relaxed.add(pick)


# --------------------------------------------------------------------------
# episode adapters (same loop and log format as the main planner)
# --------------------------------------------------------------------------


def _fail_plan():
    from .simulate import Granularity, Plan

    return Plan([], set(), [], Granularity.CONTINUOUS_UNION, False)


def _path_plan(poly, relaxed=None):
    from .simulate import Granularity, Plan

    return Plan([], set(relaxed or ()), list(poly),
                Granularity.CONTINUOUS_UNION, True)


class DStarPolicy:
    """Incremental D* Lite repair against the evolving belief map."""

    name = "dstar"
    explicit_relaxation = False

    def __init__(self, cost_table: LabelCostTable):
        self.cost_table = cost_table
        self.planner = None
        self.prev_labels = None

    def exec_seg(self):
        return None

    def relaxed_cells(self, plan):
        return set()

    def plan(self, sim, pos, goal):
        belief = sim.belief_grid
        try:
            if self.planner is None:
                self.planner = DStarLite(belief, self.cost_table, pos, goal)
                self.prev_labels = belief.labels.copy()
                poly = self.planner.plan()
            else:
                changed = np.argwhere(self.prev_labels != belief.labels)
                self.prev_labels = belief.labels.copy()
                self.planner.move_start(belief, pos)
                if changed.size:
                    poly = self.planner.replan(
                        belief, [tuple(rc) for rc in changed])
                else:
                    poly = self.planner.plan()
        except NoPath:
            return _fail_plan()
        return _path_plan(poly)


class COAStarPolicy:
    """From-scratch class-ordered replanning on every loop iteration."""

    name = "coastar"
    explicit_relaxation = False

    def __init__(self, order: ClassOrder):
        self.order = order

    def exec_seg(self):
        return None

    def relaxed_cells(self, plan):
        return set()

    def plan(self, sim, pos, goal):
        try:
            return _path_plan(coa_star(sim.belief_grid, self.order, pos, goal))
        except NoPath:
            return _fail_plan()


class RCRPolicy:
    """Greedy risk/goal-distance relaxation, re-run per replanning step."""

    name = "rcr"
    explicit_relaxation = True

    def __init__(self, risk_map: dict, target_n: int | None = None,
                 alpha: float = 0.5, beta: float = 0.5):
        self.risk_map = risk_map
        self.target_n = target_n
        self.alpha = alpha
        self.beta = beta
        self.seg = None
        self._seg_labels = None

    def exec_seg(self):
        return self.seg

    def relaxed_cells(self, plan):
        if self.seg is None:
            return set()
        w = self.seg.assignment.shape[1]
        out = set()
        for rid in plan.relaxed_set:
            rows, cols = self.seg.region_cells[rid]
            out.update(int(r) * w + int(c) for r, c in zip(rows, cols))
        return out

    def plan(self, sim, pos, goal):
        from .superpixel import slic_segment
        from .superpixel import default_target_n

        belief = sim.belief_grid
        if self.seg is None or not np.array_equal(self._seg_labels,
                                                  belief.labels):
            tn = self.target_n or default_target_n(belief)
            self.seg = slic_segment(belief, tn)
            self._seg_labels = belief.labels.copy()
        try:
            poly, relaxed = rcr_plan(belief, self.seg, self.risk_map, pos,
                                     goal, alpha=self.alpha, beta=self.beta)
        except NoPath:
            return _fail_plan()
        return _path_plan(poly, relaxed)
