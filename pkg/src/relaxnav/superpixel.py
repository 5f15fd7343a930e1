"""Superpixel segmentation of traversable space and the region graph.

Traversable cells (free or soft) are clustered SLIC-style: k-means over
cell coordinates with seeds on a regular lattice, where a cell may only
join a cluster of its own semantic label. We restrict assignment further
to the cell's own same-label connected component, which the label
restriction plus the connectivity post-pass would converge to anyway;
doing it up front makes every component's segmentation independent of the
rest of the map, so incremental updates reproduce a from-scratch rebuild
exactly.

The lattice spacing derives from the full frame (S = sqrt(W*H/target_n)),
not from the traversable area, so it is invariant under relabeling and
identical for the original and the perturbed map.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import (
    DimensionMismatch,
    GoalOnHard,
    NoTraversableSpace,
    PointOnHard,
    PointOutOfBounds,
    StartOnHard,
    UnknownRegion,
)
from .semantic_map import RegionClass, SemanticGrid

_FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])

DEFAULT_TAU = 1.0
DEFAULT_COMPACTNESS = 10.0
DEFAULT_MAX_ITERS = 10
DEFAULT_REGION_AREA_M2 = 25.0


def default_target_n(grid: SemanticGrid) -> int:
    """Nominal region count giving ~25 m^2 mean superpixel area."""
    area = grid.width * grid.height * grid.resolution ** 2
    return max(1, round(area / DEFAULT_REGION_AREA_M2))


@dataclass(frozen=True)
class Segmentation:
    """Partition of the traversable cells into label-pure superpixels.

    assignment holds a region id per cell, -1 on hard cells. Region ids are
    contiguous in [0, n_regions). Immutable; updates return new instances.
    """

    assignment: np.ndarray  # (H, W) int32, -1 where hard
    n_regions: int
    region_cells: tuple  # id -> (rows, cols) arrays, row-major order
    region_labels: np.ndarray  # (N,) label index per region
    resolution: float
    spacing: float  # lattice spacing S used at construction
    compactness: float
    max_iters: int

    def __post_init__(self):
        self.assignment.setflags(write=False)
        self.region_labels.setflags(write=False)

    @property
    def shape(self):
        return self.assignment.shape

    def region_of_point(self, point) -> int:
        x, y = float(point[0]), float(point[1])
        h, w = self.assignment.shape
        col = int(math.floor(x / self.resolution))
        row = int(math.floor(y / self.resolution))
        if not (0 <= row < h and 0 <= col < w):
            raise PointOutOfBounds(f"point ({x}, {y}) outside map")
        rid = int(self.assignment[row, col])
        if rid < 0:
            raise PointOnHard(f"point ({x}, {y}) lies on a hard cell")
        return rid

    def centroid_m(self, rid: int) -> tuple:
        rows, cols = self.region_cells[rid]
        res = self.resolution
        return (float((cols + 0.5).mean() * res), float((rows + 0.5).mean() * res))

    def region_area(self, rid: int) -> int:
        return self.region_cells[rid][0].size

    def adjacency_pairs(self) -> dict:
        """{(i, j): shared 4-neighbor boundary length in cells}, i < j."""
        a = self.assignment
        pairs = {}
        for u, v in ((a[:, :-1], a[:, 1:]), (a[:-1, :], a[1:, :])):
            m = (u >= 0) & (v >= 0) & (u != v)
            if not m.any():
                continue
            lo = np.minimum(u[m], v[m])
            hi = np.maximum(u[m], v[m])
            keys, counts = np.unique(lo.astype(np.int64) * self.n_regions + hi,
                                     return_counts=True)
            for k, c in zip(keys, counts):
                ij = (int(k // self.n_regions), int(k % self.n_regions))
                pairs[ij] = pairs.get(ij, 0) + int(c)
        return pairs

    def regions_within_hops(self, seed: int, hops: int) -> list:
        """Region ids reachable from seed in <= hops 4-adjacency steps."""
        if not (0 <= seed < self.n_regions):
            raise UnknownRegion(f"region {seed}")
        nbrs = [[] for _ in range(self.n_regions)]
        for (i, j) in self.adjacency_pairs():
            nbrs[i].append(j)
            nbrs[j].append(i)
        seen = {seed}
        frontier = [seed]
        for _ in range(hops):
            nxt = []
            for r in frontier:
                for q in nbrs[r]:
                    if q not in seen:
                        seen.add(q)
                        nxt.append(q)
            frontier = nxt
        return sorted(seen)


def boundary_affinity(seg: Segmentation, i: int, j: int) -> int:
    """Count of 4-adjacent cell pairs straddling regions i and j."""
    if i == j:
        raise UnknownRegion("boundary_affinity needs two distinct regions")
    for r in (i, j):
        if not (0 <= r < seg.n_regions):
            raise UnknownRegion(f"region {r}")
    a = seg.assignment
    h, w = a.shape
    rows, cols = seg.region_cells[i]
    count = 0
    for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0)):
        rr, cc = rows + dr, cols + dc
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        count += int((a[rr[ok], cc[ok]] == j).sum())
    return count


# --------------------------------------------------------------------------
# clustering internals
# --------------------------------------------------------------------------


def _lattice_points(h: int, w: int, spacing: float) -> list:
    rows = np.floor(np.arange(spacing / 2.0, h, spacing)).astype(int)
    cols = np.floor(np.arange(spacing / 2.0, w, spacing)).astype(int)
    return [(int(r), int(c)) for r in rows for c in cols]


def _label_components(grid: SemanticGrid) -> np.ndarray:
    """Connected-component id per traversable cell (-1 on hard), where a
    component never crosses a label boundary."""
    comp = np.full(grid.labels.shape, -1, dtype=np.int64)
    trav = grid.traversable_mask()
    nxt = 0
    for lab in range(grid.n_labels):
        mask = (grid.labels == lab) & trav
        if not mask.any():
            continue
        lbl, n = ndimage.label(mask, structure=_FOUR)
        comp[mask] = lbl[mask] + nxt - 1
        nxt += n
    return comp


def _cluster_component(cell_mask: np.ndarray, seeds: list, spacing: float,
                       max_iters: int) -> list:
    """K-means over the cells of one component; returns cell masks per region.

    seeds are (row, col) lattice points inside the component, in lattice
    order; a fallback seed nearest the component centroid is added when the
    lattice missed the component entirely. Deterministic: clusters iterate
    in id order and distance ties keep the lower id.
    """
    rows, cols = np.nonzero(cell_mask)
    if len(seeds) == 0:
        cy, cx = rows.mean(), cols.mean()
        k = int(np.argmin((rows - cy) ** 2 + (cols - cx) ** 2))
        seeds = [(int(rows[k]), int(cols[k]))]
    centers = np.array(seeds, dtype=np.float64)
    h, w = cell_mask.shape
    win = max(1, int(math.ceil(2.0 * spacing)))
    best_id = np.full((h, w), -1, dtype=np.int64)

    for it in range(max_iters):
        best_dist = np.full((h, w), np.inf)
        best_id.fill(-1)
        for k in range(len(centers)):
            cy, cx = centers[k]
            r0, r1 = max(0, int(cy) - win), min(h, int(cy) + win + 1)
            c0, c1 = max(0, int(cx) - win), min(w, int(cx) + win + 1)
            sub = cell_mask[r0:r1, c0:c1]
            if not sub.any():
                continue
            rr, cc = np.mgrid[r0:r1, c0:c1]
            d = (rr - cy) ** 2 + (cc - cx) ** 2
            better = sub & (d < best_dist[r0:r1, c0:c1])
            bd = best_dist[r0:r1, c0:c1]
            bi = best_id[r0:r1, c0:c1]
            bd[better] = d[better]
            bi[better] = k
        # cells beyond every window still need an owner
        miss = cell_mask & (best_id < 0)
        if miss.any():
            mr, mc = np.nonzero(miss)
            d = ((mr[:, None] - centers[None, :, 0]) ** 2
                 + (mc[:, None] - centers[None, :, 1]) ** 2)
            best_id[mr, mc] = np.argmin(d, axis=1)
        if it == max_iters - 1:
            break
        # recenter; empty clusters keep their previous center
        ids = best_id[rows, cols]
        counts = np.bincount(ids, minlength=len(centers)).astype(np.float64)
        sum_r = np.bincount(ids, weights=rows, minlength=len(centers))
        sum_c = np.bincount(ids, weights=cols, minlength=len(centers))
        nz = counts > 0
        centers[nz, 0] = sum_r[nz] / counts[nz]
        centers[nz, 1] = sum_c[nz] / counts[nz]

    # split disconnected clusters; fragments become their own regions
    regions = []
    for k in range(len(centers)):
        mask_k = cell_mask & (best_id == k)
        if not mask_k.any():
            continue
        lbl, n = ndimage.label(mask_k, structure=_FOUR)
        if n == 1:
            regions.append(mask_k)
            continue
        frags = [(lbl == f + 1) for f in range(n)]
        sizes = [int(f.sum()) for f in frags]
        order = sorted(range(n),
                       key=lambda f: (-sizes[f], np.flatnonzero(frags[f].ravel())[0]))
        for f in order:
            regions.append(frags[f])
    return regions


def _canonical_order(region_masks: list) -> list:
    """Sort regions by their first row-major cell."""
    keyed = [(int(np.flatnonzero(m.ravel())[0]), m) for m in region_masks]
    keyed.sort(key=lambda km: km[0])
    return [m for _, m in keyed]


def _finalize(grid: SemanticGrid, region_masks: list, spacing: float,
              compactness: float, max_iters: int) -> Segmentation:
    h, w = grid.labels.shape
    assignment = np.full((h, w), -1, dtype=np.int32)
    cells = []
    labels = []
    for rid, mask in enumerate(region_masks):
        assignment[mask] = rid
        rows, cols = np.nonzero(mask)
        cells.append((rows, cols))
        labels.append(int(grid.labels[rows[0], cols[0]]))
    return Segmentation(
        assignment=assignment,
        n_regions=len(region_masks),
        region_cells=tuple(cells),
        region_labels=np.array(labels, dtype=np.int64),
        resolution=grid.resolution,
        spacing=spacing,
        compactness=compactness,
        max_iters=max_iters,
    )


def slic_segment(grid: SemanticGrid, target_n: int,
                 compactness: float = DEFAULT_COMPACTNESS,
                 max_iters: int = DEFAULT_MAX_ITERS) -> Segmentation:
    """Segment the traversable space into ~target_n label-pure superpixels."""
    if target_n < 1:
        raise ValueError("target_n must be >= 1")
    trav = grid.traversable_mask()
    if not trav.any():
        raise NoTraversableSpace("map has no free or soft cells")
    h, w = grid.labels.shape
    spacing = math.sqrt(h * w / target_n)
    comp = _label_components(grid)
    lattice = _lattice_points(h, w, spacing)

    seeds_by_comp = {}
    for (r, c) in lattice:
        cid = comp[r, c]
        if cid >= 0:
            seeds_by_comp.setdefault(int(cid), []).append((r, c))

    masks = []
    for cid in range(int(comp.max()) + 1):
        cell_mask = comp == cid
        masks.extend(_cluster_component(
            cell_mask, seeds_by_comp.get(cid, []), spacing, max_iters))
    return _finalize(grid, _canonical_order(masks), spacing, compactness,
                     max_iters)


# --------------------------------------------------------------------------
# region graph
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RegionNode:
    id: int
    centroid: tuple  # (x, y) meters
    label: int
    n_labels: int
    is_start: bool
    is_goal: bool
    region_class: RegionClass

    @property
    def label_onehot(self) -> np.ndarray:
        v = np.zeros(self.n_labels)
        v[self.label] = 1.0
        return v


@dataclass(frozen=True)
class RegionGraph:
    """Undirected region-adjacency graph over a segmentation."""

    nodes: tuple  # RegionNode, ids 0..N-1
    edges: tuple  # (i, j, weight_m) with i < j
    adjacency: np.ndarray  # (N, N) binary
    weights: np.ndarray  # (N, N) meters, 0 where no edge
    tau: float
    map_diagonal_m: float

    def __post_init__(self):
        self.adjacency.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def start_node(self) -> int:
        return next(n.id for n in self.nodes if n.is_start)

    @property
    def goal_node(self) -> int:
        return next(n.id for n in self.nodes if n.is_goal)

    def soft_mask(self) -> np.ndarray:
        return np.array([1.0 if n.region_class == RegionClass.SOFT else 0.0
                         for n in self.nodes])

    def centroids(self) -> np.ndarray:
        return np.array([n.centroid for n in self.nodes])

    def neighbors(self, i: int) -> np.ndarray:
        return np.nonzero(self.adjacency[i])[0]


def build_graph(grid: SemanticGrid, seg: Segmentation, start, goal,
                tau: float = DEFAULT_TAU) -> RegionGraph:
    """Build the region graph with start/goal flags and centroid-distance
    edge weights wherever boundary affinity >= tau."""
    try:
        start_region = seg.region_of_point(start)
    except PointOnHard as e:
        raise StartOnHard(str(e)) from e
    try:
        goal_region = seg.region_of_point(goal)
    except PointOnHard as e:
        raise GoalOnHard(str(e)) from e

    n = seg.n_regions
    classes = np.array([grid.label_table[l][1] for l in seg.region_labels])
    nodes = []
    cents = np.zeros((n, 2))
    for rid in range(n):
        cx, cy = seg.centroid_m(rid)
        cents[rid] = (cx, cy)
        nodes.append(RegionNode(
            id=rid, centroid=(cx, cy), label=int(seg.region_labels[rid]),
            n_labels=grid.n_labels,
            is_start=(rid == start_region), is_goal=(rid == goal_region),
            region_class=RegionClass(int(classes[rid]))))

    adjacency = np.zeros((n, n))
    weights = np.zeros((n, n))
    edges = []
    for (i, j), aff in sorted(seg.adjacency_pairs().items()):
        if aff < tau:
            continue
        d = float(np.hypot(*(cents[i] - cents[j])))
        adjacency[i, j] = adjacency[j, i] = 1.0
        weights[i, j] = weights[j, i] = d
        edges.append((i, j, d))
    diag = math.hypot(grid.width * grid.resolution,
                      grid.height * grid.resolution)
    return RegionGraph(nodes=tuple(nodes), edges=tuple(edges),
                       adjacency=adjacency, weights=weights, tau=tau,
                       map_diagonal_m=diag)


def update_graph(graph: RegionGraph, seg: Segmentation,
                 old_grid: SemanticGrid, new_grid: SemanticGrid,
                 start=None, goal=None):
    """Re-segment only where labels changed; rebuild affected edges.

    Components of the new grid untouched by the change keep their regions
    (ids compact downward in order when regions vanish; with no removals
    ids are unchanged). Output equals a from-scratch segmentation of
    new_grid up to region renumbering.
    """
    if old_grid.labels.shape != new_grid.labels.shape:
        raise DimensionMismatch("grids differ in size")
    if start is None:
        start = graph.nodes[graph.start_node].centroid
    if goal is None:
        goal = graph.nodes[graph.goal_node].centroid
    changed = old_grid.labels != new_grid.labels
    if not changed.any():
        return graph, seg

    comp = _label_components(new_grid)
    ocomp = _label_components(old_grid)
    n_comp = int(comp.max()) + 1
    osizes = np.bincount(ocomp[ocomp >= 0].ravel()) if (ocomp >= 0).any() else []

    kept_masks = []
    dirty_comps = []
    for cid in range(n_comp):
        cmask = comp == cid
        # a component's clustering is a function of its whole cell set, so
        # it can only be reused when it matches an old component exactly
        if bool(changed[cmask].any()):
            dirty_comps.append(cid)
            continue
        ovals = np.unique(ocomp[cmask])
        if ovals.size != 1 or ovals[0] < 0 or \
                int(osizes[int(ovals[0])]) != int(cmask.sum()):
            dirty_comps.append(cid)
            continue
        rids = np.unique(seg.assignment[cmask])
        rids = rids[rids >= 0]
        kept_masks.extend((int(r), seg.assignment == r) for r in rids)

    kept_masks.sort(key=lambda t: t[0])

    h, w = new_grid.labels.shape
    lattice = _lattice_points(h, w, seg.spacing)
    new_masks = []
    for cid in dirty_comps:
        cmask = comp == cid
        seeds = [(r, c) for (r, c) in lattice if comp[r, c] == cid]
        new_masks.extend(_cluster_component(cmask, seeds, seg.spacing,
                                            seg.max_iters))
    new_masks = _canonical_order(new_masks)

    # id assignment: kept regions retain their old ids whenever those fit
    # in the new id range; re-segmented regions fill the freed slots in
    # canonical order, then any displaced survivors, preserving order.
    n_total = len(kept_masks) + len(new_masks)
    masks = [None] * n_total
    displaced = []
    for rid, mask in kept_masks:
        if rid < n_total and masks[rid] is None:
            masks[rid] = mask
        else:
            displaced.append(mask)
    holes = [i for i in range(n_total) if masks[i] is None]
    for i, mask in zip(holes, new_masks + displaced):
        masks[i] = mask

    new_seg = _finalize(new_grid, masks, seg.spacing, seg.compactness,
                        seg.max_iters)
    new_graph = build_graph(new_grid, new_seg, start, goal, tau=graph.tau)
    return new_graph, new_seg


def project_path(seg: Segmentation, path) -> list:
    """Region-membership sequence of a polyline, consecutive duplicates
    collapsed."""
    out = []
    for p in path:
        rid = seg.region_of_point(p)
        if not out or out[-1] != rid:
            out.append(rid)
    return out


# --------------------------------------------------------------------------
# json export (consumed by the CLI and the UI)
# --------------------------------------------------------------------------


def segmentation_to_json(seg: Segmentation) -> dict:
    flat = seg.assignment.ravel()
    runs = []
    i = 0
    n = flat.size
    while i < n:
        v = int(flat[i])
        j = i
        while j < n and flat[j] == v:
            j += 1
        runs.append([v, j - i])
        i = j
    return {
        "height": int(seg.assignment.shape[0]),
        "width": int(seg.assignment.shape[1]),
        "n_regions": seg.n_regions,
        "resolution": seg.resolution,
        "spacing": seg.spacing,
        "compactness": seg.compactness,
        "max_iters": seg.max_iters,
        "assignment_rle": runs,
    }


def segmentation_from_json(doc: dict, grid: SemanticGrid) -> Segmentation:
    h, w = doc["height"], doc["width"]
    flat = np.empty(h * w, dtype=np.int32)
    i = 0
    for v, run in doc["assignment_rle"]:
        flat[i:i + run] = v
        i += run
    if i != h * w:
        raise DimensionMismatch("RLE does not cover the grid")
    assignment = flat.reshape(h, w)
    n = doc["n_regions"]
    cells = []
    labels = []
    for rid in range(n):
        rows, cols = np.nonzero(assignment == rid)
        cells.append((rows, cols))
        labels.append(int(grid.labels[rows[0], cols[0]]))
    return Segmentation(
        assignment=assignment, n_regions=n, region_cells=tuple(cells),
        region_labels=np.array(labels, dtype=np.int64),
        resolution=doc["resolution"], spacing=doc["spacing"],
        compactness=doc["compactness"], max_iters=doc["max_iters"])


def graph_to_json(graph: RegionGraph) -> dict:
    return {
        "tau": graph.tau,
        "map_diagonal_m": graph.map_diagonal_m,
        "nodes": [
            {"id": n.id, "centroid": [n.centroid[0], n.centroid[1]],
             "label": n.label, "is_start": n.is_start, "is_goal": n.is_goal,
             "region_class": int(n.region_class)}
            for n in graph.nodes
        ],
        "edges": [[i, j, w] for (i, j, w) in graph.edges],
    }


def save_segmentation(seg: Segmentation, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(segmentation_to_json(seg), f)


def save_graph(graph: RegionGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(graph_to_json(graph), f)
