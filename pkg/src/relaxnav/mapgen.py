"""Synthetic semi-static worlds for desk-scale training and benchmarks.

Corridor worlds are sidewalk fields cut by hard building walls whose only
passages are soft-labeled patches (grass, road, rough terrain), so any
crossing demands a relaxation. Small soft shortcut pockets and hard water
blobs add route texture. Semi-static variants perturb a superpixel seed
sampled along a reference route, obstructing the pathway mid-mission.
"""

from __future__ import annotations

import numpy as np

from .errors import NoPath
from .search import grid_astar, traversable_mask
from .semantic_map import (
    Perturbation,
    RegionClass,
    Scenario,
    SemanticGrid,
)
from .superpixel import Segmentation, slic_segment
from .training import cost_table_to_cell_costs, oracle_expert

LABEL_TABLE = (
    ("sidewalk", RegionClass.FREE),
    ("grass", RegionClass.SOFT),
    ("road", RegionClass.SOFT),
    ("rough", RegionClass.SOFT),
    ("building", RegionClass.HARD),
    ("water", RegionClass.HARD),
    ("blocked", RegionClass.HARD),
)

SIDEWALK, GRASS, ROAD, ROUGH, BUILDING, WATER, BLOCKED = range(7)

# unit risks per label; doubles as the oracle's per-cell traversal penalty
DEFAULT_RISK = {
    "sidewalk": 0.0,
    "grass": 0.25,
    "road": 0.85,
    "rough": 0.45,
    "building": 1.0,
    "water": 1.0,
    "blocked": 1.0,
}

SOFT_GAP_LABELS = (GRASS, GRASS, ROAD, ROUGH)  # grass-biased draw


def corridor_world(seed: int, width: int = 48, height: int = 48,
                   n_walls: int = 2, resolution: float = 1.0,
                   shortcut_patches: int = 8, water_blobs: int = 2) -> SemanticGrid:
    """Sidewalk field crossed by hard walls with soft-filled gaps.

    Wall passages mix three patterns so route choice is context dependent:
    a lone grass gap, a short road crossing with a distant grass
    alternative (cross here or detour far), and two distant grass gaps
    (nearest wins). Small grass pockets scattered over the field tempt
    corner cuts that only pay off when the geometry is right.
    """
    rng = np.random.default_rng(seed)
    lab = np.full((height, width), SIDEWALK, dtype=np.uint8)

    slab = width // (n_walls + 1)
    for wi in range(n_walls):
        x = slab * (wi + 1) + int(rng.integers(-2, 3))
        x = min(max(x, 3), width - 4)
        thick = int(rng.integers(2, 4))
        lab[:, x:x + thick] = BUILDING
        pattern = int(rng.integers(0, 3))
        if pattern == 0:  # single grass gap
            gh = int(rng.integers(5, 9))
            y0 = int(rng.integers(1, height - gh - 1))
            lab[y0:y0 + gh, x:x + thick] = GRASS
        elif pattern == 1:  # short road crossing, grass far away
            gh = int(rng.integers(4, 6))
            if rng.uniform() < 0.5:
                road_y = int(rng.integers(2, height // 3))
                grass_y = int(rng.integers(2 * height // 3, height - gh - 1))
            else:
                road_y = int(rng.integers(2 * height // 3, height - gh - 1))
                grass_y = int(rng.integers(2, height // 3))
            lab[road_y:road_y + gh, x:x + thick] = ROAD
            lab[grass_y:grass_y + gh, x:x + thick] = GRASS
        else:  # two grass gaps far apart
            gh = int(rng.integers(4, 7))
            y0 = int(rng.integers(1, height // 3))
            y1 = int(rng.integers(2 * height // 3, height - gh - 1))
            lab[y0:y0 + gh, x:x + thick] = GRASS
            lab[y1:y1 + gh, x:x + thick] = GRASS

    # shortcut pockets: small grass patches that merely tempt corner cuts
    for _ in range(shortcut_patches):
        ph, pw = int(rng.integers(2, 5)), int(rng.integers(3, 7))
        r0 = int(rng.integers(1, height - ph - 1))
        c0 = int(rng.integers(1, width - pw - 1))
        patch = lab[r0:r0 + ph, c0:c0 + pw]
        if np.all(patch == SIDEWALK):
            lab[r0:r0 + ph, c0:c0 + pw] = GRASS

    for _ in range(water_blobs):
        ph, pw = int(rng.integers(4, 7)), int(rng.integers(4, 8))
        r0 = int(rng.integers(1, height - ph - 1))
        c0 = int(rng.integers(1, width - pw - 1))
        patch = lab[r0:r0 + ph, c0:c0 + pw]
        if np.all(patch == SIDEWALK):
            lab[r0:r0 + ph, c0:c0 + pw] = WATER

    return SemanticGrid(width, height, resolution, lab, LABEL_TABLE)


def has_traversable_path(grid: SemanticGrid, start, goal) -> bool:
    try:
        grid_astar(grid, traversable_mask(grid), start, goal)
        return True
    except NoPath:
        return False


def sample_cross_scenario(grid: SemanticGrid, rng, map_id: str,
                          idx: int, min_dx_frac: float = 0.55) -> Scenario:
    """Start near the left edge, goal near the right, both on sidewalk,
    far enough apart to force wall crossings."""
    classes = grid.class_map()
    free_r, free_c = np.nonzero(classes == RegionClass.FREE)
    res = grid.resolution
    w = grid.width
    for _ in range(500):
        i = int(rng.integers(0, free_r.size))
        j = int(rng.integers(0, free_r.size))
        if free_c[i] > free_c[j]:
            i, j = j, i
        if (free_c[j] - free_c[i]) < min_dx_frac * w:
            continue
        start = ((free_c[i] + 0.5) * res, (free_r[i] + 0.5) * res)
        goal = ((free_c[j] + 0.5) * res, (free_r[j] + 0.5) * res)
        if has_traversable_path(grid, start, goal):
            return Scenario(map_id=map_id, start=start, goal=goal,
                            risk_table=dict(DEFAULT_RISK),
                            scenario_id=f"{map_id}-s{idx:03d}")
    raise NoPath("could not sample a crossing scenario")


def perturb_along_route(grid: SemanticGrid, seg: Segmentation,
                        scenario: Scenario, rng,
                        radius: int = 1) -> Scenario | None:
    """Semi-static variant: blocks a superpixel seed sampled along the
    scenario's reference route. Returns None when no blocking perturbation
    keeps the goal reachable."""
    cost = cost_table_to_cell_costs(grid, scenario.risk_table)
    route = grid_astar(grid, traversable_mask(grid), scenario.start,
                       scenario.goal, cell_cost=cost)
    interior = route[2:-2]
    if not interior:
        return None
    order = rng.permutation(len(interior))
    from .semantic_map import apply_perturbation

    for k in order[:12]:
        seed_xy = interior[int(k)]
        p = Perturbation(seed_position=seed_xy, radius=radius,
                         new_label=BLOCKED)
        try:
            perturbed = apply_perturbation(grid, seg, p)
        except Exception:
            continue
        if has_traversable_path(perturbed, scenario.start, scenario.goal):
            return Scenario(
                map_id=scenario.map_id, start=scenario.start,
                goal=scenario.goal, perturbations=(p,),
                risk_table=scenario.risk_table,
                scenario_id=scenario.scenario_id + "p")
    return None


def apply_scenario_perturbations(grid: SemanticGrid, seg: Segmentation,
                                 scenario: Scenario) -> SemanticGrid:
    """Ground-truth grid after all scenario perturbations.

    All perturbations are interpreted against the segmentation of the
    original grid, applied to the labels in order.
    """
    from .semantic_map import apply_perturbation

    cur = grid
    for p in scenario.perturbations:
        cur = cur.with_labels(apply_perturbation(grid, seg, p).labels
                              if cur is grid else _merge(cur, grid, seg, p))
    return cur


def _merge(cur: SemanticGrid, base: SemanticGrid, seg: Segmentation,
           p: Perturbation) -> np.ndarray:
    delta = apply_perturbation(base, seg, p)
    out = cur.labels.copy()
    changed = delta.labels != base.labels
    out[changed] = delta.labels[changed]
    return out


def make_corpus(n_maps: int = 5, scen_per_map: int = 25, seed: int = 0,
                width: int = 48, height: int = 48, target_n: int = 40,
                perturbed_frac: float = 0.5):
    """Training corpus: (truth_grid, scenario, oracle demo) triples.

    Roughly half the scenarios carry a mid-route blocking perturbation
    (already applied to the returned truth grid). Deterministic in seed.
    """
    rng = np.random.default_rng(seed)
    items = []
    maps = {}
    for mi in range(n_maps):
        grid = corridor_world(seed * 1000 + mi, width=width, height=height)
        map_id = f"m{seed}_{mi}"
        maps[map_id] = grid
        seg = slic_segment(grid, target_n)
        made = 0
        guard = 0
        while made < scen_per_map and guard < scen_per_map * 10:
            guard += 1
            try:
                scen = sample_cross_scenario(grid, rng, map_id, made)
            except NoPath:
                break
            truth = grid
            if rng.uniform() < perturbed_frac:
                pscen = perturb_along_route(grid, seg, scen, rng)
                if pscen is not None:
                    scen = pscen
                    truth = apply_scenario_perturbations(grid, seg, scen)
            try:
                demo = oracle_expert(truth, scen, scen.risk_table)
            except NoPath:
                continue
            items.append((truth, scen, demo))
            made += 1
    return items, maps
