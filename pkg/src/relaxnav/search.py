"""Differentiable graph search with relaxation penalties, plus grid A*.

The graph search expands nodes in best-first order. Node priorities are
computed through a temperature-controlled soft distribution over the open
set; the hard selection is the argmax of those weights, so the forward
pass is an exact search while the normalized weights stay differentiable
with respect to the per-node relaxation costs. Container updates treat the
hard selection as a constant: gradients reach the cost estimator through
the selection weights (collected into a soft closed-set occupancy), which
keeps reverse-mode gradients consistent with finite differences of the
surrogate loss.

Cost model: entering node j from i costs W[i, j]; a node's relaxation
penalty psi is charged once when a path passes through it (start included,
goal included via the final cost), which is zero on free nodes.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import (
    EmptyOpenSet,
    NodeNotOpen,
    NoPath,
    StepBudgetExceeded,
)
from .semantic_map import RegionClass, SemanticGrid
from .superpixel import RegionGraph

DEFAULT_LAMBDA_SCALE = 0.1  # lambda = scale * mean edge weight


@dataclass
class SearchState:
    """Containers of one search: open/closed masks, costs, heuristic."""

    open_mask: np.ndarray  # (N,) float 0/1
    closed_mask: np.ndarray  # (N,) float 0/1
    g: Tensor  # (N,) accumulated cost, +inf sentinel on unreached nodes
    h: np.ndarray  # (N,) heuristic, meters
    parent: np.ndarray  # (N,) int, -1 where unset
    lam: float

    def copy(self) -> "SearchState":
        return SearchState(self.open_mask.copy(), self.closed_mask.copy(),
                           self.g, self.h, self.parent.copy(), self.lam)


@dataclass
class SearchResult:
    graph_path: list  # node ids start..goal (empty on failure)
    cost: float
    closed_mask: np.ndarray
    relaxed_mask: np.ndarray  # closed & soft
    expansions: int
    success: bool
    cost_tensor: Tensor | None = None
    soft_closed: Tensor | None = None  # sum of selection weights per step
    soft_relaxed: Tensor | None = None  # soft_closed masked to soft nodes


def heuristic(graph: RegionGraph) -> np.ndarray:
    """Euclidean centroid distance to the goal node (admissible for
    centroid-distance edge weights)."""
    cents = graph.centroids()
    goal = cents[graph.goal_node]
    return np.hypot(cents[:, 0] - goal[0], cents[:, 1] - goal[1])


def default_lambda(graph: RegionGraph) -> float:
    if graph.edges:
        mean_w = float(np.mean([w for (_, _, w) in graph.edges]))
    else:
        mean_w = 1.0
    return max(DEFAULT_LAMBDA_SCALE * mean_w, 1e-9)


def select_node(state: SearchState, g_eff: Tensor):
    """Pick the open node minimizing g_eff + h.

    Returns (v_sel, weights): v_sel is the hard one-hot selection (straight
    through), weights the soft priority distribution the gradients flow
    through. Ties resolve to the lowest node id.
    """
    if not state.open_mask.any():
        raise EmptyOpenSet("no open nodes")
    z = (g_eff + Tensor(state.h)) * (-1.0 / state.lam)
    weights = ad.masked_softmax(z, state.open_mask)
    v_sel = ad.one_hot_argmax_st(weights)
    return v_sel, weights


def expand(state: SearchState, v_sel, A: np.ndarray, W: np.ndarray,
           psi) -> SearchState:
    """Close the selected node and relax its undiscovered neighbors.

    The candidate cost for a neighbor j is g[sel] + psi[sel] + W[sel, j];
    g keeps the node-wise minimum and improved neighbors (re)enter the open
    set. The one-hot selection is treated as a constant here.
    """
    v = v_sel.data if isinstance(v_sel, Tensor) else np.asarray(v_sel)
    sel = int(np.argmax(v))
    if state.open_mask[sel] == 0:
        raise NodeNotOpen(f"node {sel} is not open")
    psi_t = psi if isinstance(psi, Tensor) else Tensor(psi)
    out = state.copy()
    out.open_mask[sel] = 0.0
    out.closed_mask[sel] = 1.0

    nbr = (A[sel] > 0) & (out.closed_mask == 0)
    if nbr.any():
        g_ext_sel = ad.pick(state.g, sel) + ad.pick(psi_t, sel)
        cand = ad.broadcast_scalar(g_ext_sel, v.size) + Tensor(W[sel])
        gate = np.where(nbr, 0.0, np.inf)
        g_new = ad.minimum(state.g, cand + Tensor(gate))
        improved = nbr & (g_new.data < state.g.data)
        out.parent[improved] = sel
        out.open_mask[improved] = 1.0
        out.g = g_new
    return out


def diff_search(graph: RegionGraph, psi, lam: float | None = None,
                max_steps: int | None = None, strict: bool = False) -> SearchResult:
    """Best-first search from the graph's start node to its goal node.

    psi is a length-N non-negative relaxation cost (Tensor to collect
    gradients, ndarray for plain inference); it must be zero on free nodes.
    With psi == 0 the returned cost equals the exact shortest-path cost for
    any positive temperature. On failure returns success=False with the
    best-effort closed set, or raises when strict=True.
    """
    n = graph.n_nodes
    start, goal = graph.start_node, graph.goal_node
    psi_t = psi if isinstance(psi, Tensor) else Tensor(np.asarray(psi, dtype=np.float64))
    if lam is None:
        lam = default_lambda(graph)
    if max_steps is None:
        max_steps = 4 * n

    g0 = np.full(n, np.inf)
    g0[start] = 0.0
    state = SearchState(
        open_mask=np.zeros(n), closed_mask=np.zeros(n),
        g=Tensor(g0), h=heuristic(graph),
        parent=np.full(n, -1, dtype=np.int64), lam=float(lam))
    state.open_mask[start] = 1.0

    soft_mask = graph.soft_mask()
    soft_closed = Tensor(np.zeros(n))
    expansions = 0
    success = False

    for _ in range(max_steps):
        if not state.open_mask.any():
            break
        g_eff = state.g + psi_t
        v_sel, weights = select_node(state, g_eff)
        soft_closed = soft_closed + weights
        sel = int(np.argmax(v_sel.data))
        if sel == goal:
            state.open_mask[sel] = 0.0
            state.closed_mask[sel] = 1.0
            success = True
            break
        state = expand(state, v_sel, graph.adjacency, graph.weights, psi_t)
        expansions += 1
    else:
        if strict:
            raise StepBudgetExceeded(f"no goal within {max_steps} steps")

    if not success and strict:
        raise NoPath("open set exhausted before reaching the goal")

    path = []
    cost = math.inf
    cost_tensor = None
    if success:
        node = goal
        while node != -1:
            path.append(node)
            node = int(state.parent[node])
        path.reverse()
        cost_tensor = ad.pick(state.g, goal) + ad.pick(psi_t, goal)
        cost = float(cost_tensor.data)

    soft_relaxed = soft_closed * Tensor(soft_mask)
    return SearchResult(
        graph_path=path,
        cost=cost,
        closed_mask=state.closed_mask.copy(),
        relaxed_mask=state.closed_mask * soft_mask,
        expansions=expansions,
        success=success,
        cost_tensor=cost_tensor,
        soft_closed=soft_closed,
        soft_relaxed=soft_relaxed,
    )


# --------------------------------------------------------------------------
# grid-level A*
# --------------------------------------------------------------------------

_DIAG = math.sqrt(2.0)
_MOVES = ((0, 1, 1.0), (1, 0, 1.0), (0, -1, 1.0), (-1, 0, 1.0),
          (1, 1, _DIAG), (1, -1, _DIAG), (-1, 1, _DIAG), (-1, -1, _DIAG))


def _octile(r0, c0, r1, c1) -> float:
    dr, dc = abs(r0 - r1), abs(c0 - c1)
    return (max(dr, dc) - min(dr, dc)) + _DIAG * min(dr, dc)


def grid_astar(grid: SemanticGrid, allowed, start, goal,
               cell_cost: np.ndarray | None = None) -> list:
    """8-connected shortest path in meters over cells passing `allowed`.

    allowed is a boolean (H, W) mask or a predicate over (row, col).
    Diagonal moves may not cut corners (both orthogonal neighbors must be
    allowed). cell_cost, when given, adds a per-cell penalty charged on
    entering that cell. Returns the polyline of cell centers; raises NoPath.
    """
    h, w = grid.labels.shape
    if callable(allowed):
        mask = np.fromfunction(
            np.vectorize(lambda r, c: bool(allowed(int(r), int(c)))),
            (h, w), dtype=int).astype(bool)
    else:
        mask = np.asarray(allowed, dtype=bool)
    res = grid.resolution
    sr, sc = grid.cell_of(start)
    gr, gc = grid.cell_of(goal)
    if not mask[sr, sc] or not mask[gr, gc]:
        raise NoPath("start or goal not in the allowed set")

    gval = np.full((h, w), np.inf)
    gval[sr, sc] = 0.0
    parent = np.full((h, w), -1, dtype=np.int64)
    closed = np.zeros((h, w), dtype=bool)
    heap = [(_octile(sr, sc, gr, gc) * res, 0.0, sr * w + sc)]
    while heap:
        f, gcur, flat = heapq.heappop(heap)
        r, c = divmod(flat, w)
        if closed[r, c]:
            continue
        closed[r, c] = True
        if (r, c) == (gr, gc):
            break
        for dr, dc, step in _MOVES:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h and 0 <= nc < w) or not mask[nr, nc]:
                continue
            if dr != 0 and dc != 0 and not (mask[r, nc] and mask[nr, c]):
                continue  # no corner cutting
            ng = gcur + step * res
            if cell_cost is not None:
                ng += float(cell_cost[nr, nc])
            if ng < gval[nr, nc]:
                gval[nr, nc] = ng
                parent[nr, nc] = flat
                heapq.heappush(heap, (ng + _octile(nr, nc, gr, gc) * res,
                                      ng, nr * w + nc))
    if not closed[gr, gc]:
        raise NoPath("goal unreachable over the allowed cells")

    cells = []
    flat = gr * w + gc
    while flat != -1:
        r, c = divmod(flat, w)
        cells.append((r, c))
        flat = int(parent[r, c])
    cells.reverse()
    return [grid.cell_center(r, c) for (r, c) in cells]


def grid_path_cost(grid: SemanticGrid, path_cells, cell_cost=None) -> float:
    """Cost of a cell path under the grid_astar model (oracle helper)."""
    res = grid.resolution
    total = 0.0
    for (r0, c0), (r1, c1) in zip(path_cells, path_cells[1:]):
        step = _DIAG if (r0 != r1 and c0 != c1) else 1.0
        total += step * res
        if cell_cost is not None:
            total += float(cell_cost[r1, c1])
    return total


def allowed_mask_for_classes(grid: SemanticGrid, classes) -> np.ndarray:
    """Boolean mask of cells whose region class is in `classes`."""
    cm = grid.class_map()
    mask = np.zeros(cm.shape, dtype=bool)
    for cl in classes:
        mask |= cm == int(cl)
    return mask


def free_mask(grid: SemanticGrid) -> np.ndarray:
    return allowed_mask_for_classes(grid, (RegionClass.FREE,))


def traversable_mask(grid: SemanticGrid) -> np.ndarray:
    return allowed_mask_for_classes(grid, (RegionClass.FREE, RegionClass.SOFT))
