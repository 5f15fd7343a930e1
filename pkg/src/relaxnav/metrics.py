"""Evaluation metrics and the benchmark sweep across planners.

Human-likeness: discrete Fréchet distance between the executed and the
reference trajectory (both resampled at one sample per cell length),
normalized by the start-goal Euclidean distance; relaxation IoU between
predicted and reference relaxed region sets over a common segmentation.
Task metrics: success (goal reached without entering hard truth cells),
SPL, and cumulative per-cell risk along the trajectory.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import (
    COAStarPolicy,
    ClassOrder,
    DStarPolicy,
    LabelCostTable,
    RCRPolicy,
)
from .errors import (
    DegenerateEndpoints,
    NoFeasibleShortest,
    NoPath,
    SegmentationMismatch,
)
from .mapgen import DEFAULT_RISK, apply_scenario_perturbations
from .search import grid_astar, traversable_mask
from .semantic_map import RegionClass, SemanticGrid
from .simulate import (
    EpisodeLog,
    RelaxPolicy,
    WorldSim,
    path_length,
    resample_polyline,
    run_episode,
)
from .superpixel import Segmentation, slic_segment
from .training import oracle_expert

PLANNER_NAMES = ("surenav", "dstar", "coastar", "rcr")

REPORT_COLUMNS = ("planner", "map_id", "scenario_id", "frechet_norm",
                  "relax_iou", "success", "spl", "total_risk",
                  "path_length_m")


# --------------------------------------------------------------------------
# trajectory similarity
# --------------------------------------------------------------------------


def discrete_frechet(a, b) -> float:
    """Discrete Fréchet distance between two point sequences."""
    p = np.asarray(a, dtype=np.float64)
    q = np.asarray(b, dtype=np.float64)
    n, m = len(p), len(q)
    if n == 0 or m == 0:
        raise DegenerateEndpoints("empty polyline")
    d = np.hypot(p[:, None, 0] - q[None, :, 0], p[:, None, 1] - q[None, :, 1])
    ca = np.full((n, m), np.inf)
    ca[0, 0] = d[0, 0]
    for i in range(1, n):
        ca[i, 0] = max(ca[i - 1, 0], d[i, 0])
    for j in range(1, m):
        ca[0, j] = max(ca[0, j - 1], d[0, j])
    for i in range(1, n):
        for j in range(1, m):
            ca[i, j] = max(min(ca[i - 1, j], ca[i - 1, j - 1], ca[i, j - 1]),
                           d[i, j])
    return float(ca[n - 1, m - 1])


def frechet(a, b, start, goal, sample_m: float = 0.5) -> float:
    """Normalized Fréchet distance: curves resampled at one sample per
    cell length, divided by the start-goal Euclidean distance."""
    base = math.hypot(goal[0] - start[0], goal[1] - start[1])
    if base <= 0:
        raise DegenerateEndpoints("start equals goal")
    if not len(a) or not len(b):
        raise DegenerateEndpoints("empty polyline")
    ra = resample_polyline(a, sample_m)
    rb = resample_polyline(b, sample_m)
    return discrete_frechet(ra, rb) / base


def relax_iou(pred, truth, n_regions: int | None = None) -> float:
    """|pred & truth| / |pred | truth| over region-id sets; 1 when both
    are empty."""
    ps, ts = set(pred), set(truth)
    if n_regions is not None:
        for rid in ps | ts:
            if not (0 <= rid < n_regions):
                raise SegmentationMismatch(f"region id {rid} out of range")
    union = ps | ts
    if not union:
        return 1.0
    return len(ps & ts) / len(union)


# --------------------------------------------------------------------------
# task metrics
# --------------------------------------------------------------------------


def trajectory_cells(traj, grid: SemanticGrid) -> list:
    """Cell sequence visited by a trajectory sampled at cell resolution,
    consecutive duplicates collapsed."""
    pts = resample_polyline(traj, grid.resolution)
    cells = []
    for p in pts:
        rc = grid.cell_of(p)
        if not cells or cells[-1] != rc:
            cells.append(rc)
    return cells


def success(log: EpisodeLog, truth: SemanticGrid) -> int:
    """1 iff the goal was reached and no trajectory cell is hard in truth."""
    if not log.reached:
        return 0
    classes = truth.class_map()
    for (r, c) in trajectory_cells(log.trajectory, truth):
        if classes[r, c] == RegionClass.HARD:
            return 0
    return 1


def spl(success_flag: int, executed_len: float, shortest_len: float) -> float:
    if shortest_len <= 0:
        raise NoFeasibleShortest("shortest path length must be positive")
    return float(success_flag) * shortest_len / max(executed_len, shortest_len)


def total_risk(traj, grid: SemanticGrid, risk_table: dict) -> float:
    """Sum of per-label unit risks over the visited cells (one charge per
    visit; re-entries count again)."""
    risk_of = np.zeros(grid.n_labels)
    for i, (name, _) in enumerate(grid.label_table):
        risk_of[i] = float(risk_table.get(name, 0.0))
    return float(sum(risk_of[grid.labels[r, c]]
                     for (r, c) in trajectory_cells(traj, grid)))


def shortest_feasible_length(truth: SemanticGrid, start, goal) -> float:
    """Length of the shortest path over free and soft truth cells."""
    try:
        poly = grid_astar(truth, traversable_mask(truth), start, goal)
    except NoPath as e:
        raise NoFeasibleShortest(str(e)) from e
    return path_length(poly)


# --------------------------------------------------------------------------
# relaxed-set projection onto a common segmentation
# --------------------------------------------------------------------------


def soft_regions_of_cells(cells_flat, seg: Segmentation,
                          grid: SemanticGrid) -> set:
    w = seg.assignment.shape[1]
    classes = np.array([grid.label_table[l][1] for l in seg.region_labels])
    out = set()
    for flat in cells_flat:
        r, c = divmod(int(flat), w)
        rid = int(seg.assignment[r, c])
        if rid >= 0 and classes[rid] == RegionClass.SOFT:
            out.add(rid)
    return out


def soft_regions_of_trajectory(traj, seg: Segmentation,
                               grid: SemanticGrid) -> set:
    classes = np.array([grid.label_table[l][1] for l in seg.region_labels])
    out = set()
    for (r, c) in trajectory_cells(traj, grid):
        rid = int(seg.assignment[r, c])
        if rid >= 0 and classes[rid] == RegionClass.SOFT:
            out.add(rid)
    return out


def predicted_relaxed_set(log: EpisodeLog, seg: Segmentation,
                          grid: SemanticGrid) -> set:
    """Planner's relaxed set projected onto the evaluation segmentation.

    Planners that emit explicit relaxation sets are taken at their word
    (via the relaxed cells); the others get the soft superpixels their
    trajectory traverses.
    """
    if log.explicit_relaxation:
        return soft_regions_of_cells(log.relax_cells, seg, grid)
    return soft_regions_of_trajectory(log.trajectory, seg, grid)


# --------------------------------------------------------------------------
# benchmark sweep
# --------------------------------------------------------------------------


@dataclass
class EpisodeRow:
    planner: str
    map_id: str
    scenario_id: str
    frechet_norm: float
    relax_iou: float
    success: int
    spl: float
    total_risk: float
    path_length_m: float
    runtime_ms: float

    def csv_values(self):
        return (self.planner, self.map_id, self.scenario_id,
                f"{self.frechet_norm:.6f}", f"{self.relax_iou:.6f}",
                str(self.success), f"{self.spl:.6f}",
                f"{self.total_risk:.6f}", f"{self.path_length_m:.6f}")


@dataclass
class MetricReport:
    rows: list
    aggregates: dict = field(default_factory=dict)

    def aggregate(self):
        per_planner = {}
        for row in self.rows:
            per_planner.setdefault(row.planner, []).append(row)
        agg = {}
        for planner, rows in sorted(per_planner.items()):
            agg[planner] = {
                "episodes": len(rows),
                "frechet_norm": float(np.mean([r.frechet_norm for r in rows])),
                "relax_iou": float(np.mean([r.relax_iou for r in rows])),
                "success_rate": float(np.mean([r.success for r in rows])),
                "spl": float(np.mean([r.spl for r in rows])),
                "total_risk": float(np.mean([r.total_risk for r in rows])),
                "path_length_m": float(np.mean([r.path_length_m for r in rows])),
            }
        self.aggregates = agg
        return agg


def make_policy(name: str, model=None, cost_table: LabelCostTable | None = None,
                class_order: ClassOrder | None = None,
                risk_table: dict | None = None, target_n: int | None = None):
    if name == "surenav":
        return RelaxPolicy(model, target_n=target_n)
    if name == "dstar":
        if cost_table is None:
            raise ValueError("dstar needs a LabelCostTable")
        return DStarPolicy(cost_table)
    if name == "coastar":
        if class_order is None:
            raise ValueError("coastar needs a ClassOrder")
        return COAStarPolicy(class_order)
    if name == "rcr":
        return RCRPolicy(risk_table or dict(DEFAULT_RISK), target_n=target_n)
    raise ValueError(f"unknown planner {name!r}")


def run_benchmark(maps: dict, scenarios, planners, model=None,
                  out_dir=None, target_n: int | None = None,
                  sensing_radius: float = 20.0,
                  baseline_demos: list | None = None,
                  max_steps: int | None = None) -> MetricReport:
    """Run every (planner, scenario) episode: belief starts from the
    unperturbed map, truth carries the scenario perturbations.

    baseline_demos, when given, is a list of (grid, seg, demos) used to
    derive the D* Lite cost table and the COA* class order; otherwise both
    derive from the oracle references of the benchmarked scenarios.
    Per-episode failures are recorded, never raised.
    """
    prior_segs = {}
    truth_cache = {}
    for scen in scenarios:
        if scen.map_id not in maps:
            raise KeyError(f"scenario references unknown map {scen.map_id!r}")
    for map_id, grid in maps.items():
        tn = target_n
        if tn is None:
            from .superpixel import default_target_n
            tn = default_target_n(grid)
        prior_segs[map_id] = slic_segment(grid, tn)

    # truth worlds + oracle references
    refs = {}
    for scen in scenarios:
        prior = maps[scen.map_id]
        truth = apply_scenario_perturbations(prior, prior_segs[scen.map_id],
                                             scen)
        truth_seg = slic_segment(truth, target_n or len(
            prior_segs[scen.map_id].region_cells))
        risk = scen.risk_table or dict(DEFAULT_RISK)
        demo = oracle_expert(truth, scen, risk)
        truth_cache[scen.scenario_id] = (truth, truth_seg)
        refs[scen.scenario_id] = demo

    # baseline configuration from demonstrations
    if baseline_demos is None:
        baseline_demos = [
            (truth_cache[s.scenario_id][0], truth_cache[s.scenario_id][1],
             [refs[s.scenario_id]]) for s in scenarios]
    cost_table = None
    order = None
    if any(p in planners for p in ("dstar", "coastar")):
        merged_costs = {}
        counts_total = {}
        grid0 = baseline_demos[0][0]
        # pool traversal counts across all demo sources
        from .baselines import _traversed_label_counts
        pooled = {}
        total = 0
        for (g, s, demos) in baseline_demos:
            counts, t = _traversed_label_counts(demos, s)
            for k, v in counts.items():
                pooled[k] = pooled.get(k, 0) + v
            total += t
        cost_table = _cost_table_from_counts(pooled, total, grid0)
        traversable = [i for i, (_, cls) in enumerate(grid0.label_table)
                       if cls != RegionClass.HARD]
        traversable.sort(key=lambda i: (-pooled.get(i, 0), i))
        order = ClassOrder(order=tuple(traversable))

    rows = []
    episodes = {}
    for planner in sorted(planners):
        for scen in sorted(scenarios, key=lambda s: s.scenario_id):
            truth, truth_seg = truth_cache[scen.scenario_id]
            prior = maps[scen.map_id]
            risk = scen.risk_table or dict(DEFAULT_RISK)
            policy = make_policy(planner, model=model, cost_table=cost_table,
                                 class_order=order, risk_table=risk,
                                 target_n=target_n)
            sim = WorldSim(true_grid=truth, belief_grid=prior,
                           agent_pos=scen.start,
                           sensing_radius=sensing_radius)
            t0 = time.perf_counter()
            try:
                log = run_episode(sim, policy, scen.goal,
                                  max_steps=max_steps,
                                  scenario_id=scen.scenario_id)
            except Exception as e:  # collected, never aborts the sweep
                log = EpisodeLog(scenario_id=scen.scenario_id, planner=planner,
                                 steps=[], trajectory=[scen.start],
                                 reached=False, success=False,
                                 hard_truth_entries=0, executed_length_m=0.0,
                                 relax_union=[], relax_cells=[],
                                 explicit_relaxation=False)
                log.error = str(e)
            runtime_ms = (time.perf_counter() - t0) * 1e3
            rows.append(_score_episode(log, scen, truth, truth_seg,
                                       refs[scen.scenario_id], runtime_ms))
            episodes[(planner, scen.scenario_id)] = log

    report = MetricReport(rows=rows)
    report.aggregate()
    if out_dir is not None:
        write_report(report, out_dir)
    report.episodes = episodes
    return report


def _cost_table_from_counts(counts: dict, total: int,
                            grid: SemanticGrid) -> LabelCostTable:
    costs = {}
    soft_raw = {}
    for i, (_, cls) in enumerate(grid.label_table):
        if cls == RegionClass.HARD:
            costs[i] = np.inf
        elif cls == RegionClass.FREE:
            costs[i] = 0.0
        else:
            p = counts.get(i, 0) / total if total else 0.0
            soft_raw[i] = 1.0 / max(p, 1e-3)
    if soft_raw:
        lo, hi = min(soft_raw.values()), max(soft_raw.values())
        for i, raw in soft_raw.items():
            costs[i] = (raw - lo) / (hi - lo) if hi > lo else 1.0
    return LabelCostTable(costs=costs, derivation="demo_frequency")


def _score_episode(log: EpisodeLog, scen, truth: SemanticGrid,
                   truth_seg: Segmentation, ref_demo,
                   runtime_ms: float) -> EpisodeRow:
    risk = scen.risk_table or dict(DEFAULT_RISK)
    ok = success(log, truth)
    try:
        shortest = shortest_feasible_length(truth, scen.start, scen.goal)
        spl_v = spl(ok, max(log.executed_length_m, 1e-9), shortest)
    except NoFeasibleShortest:
        spl_v = 0.0
    if len(log.trajectory) >= 1 and len(ref_demo.polyline) >= 1:
        fre = frechet(log.trajectory, ref_demo.polyline, scen.start,
                      scen.goal, sample_m=truth.resolution)
    else:
        fre = float("inf")
    truth_set = soft_regions_of_trajectory(ref_demo.polyline, truth_seg, truth)
    pred_set = predicted_relaxed_set(log, truth_seg, truth)
    iou = relax_iou(pred_set, truth_set)
    return EpisodeRow(
        planner=log.planner, map_id=scen.map_id,
        scenario_id=scen.scenario_id, frechet_norm=fre, relax_iou=iou,
        success=ok, spl=spl_v,
        total_risk=total_risk(log.trajectory, truth, risk),
        path_length_m=log.executed_length_m, runtime_ms=runtime_ms)


def write_report(report: MetricReport, out_dir) -> None:
    """report.csv (deterministic), report.json aggregates, scatter.csv,
    timings.csv (wall-clock, excluded from the determinism contract)."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    rows = sorted(report.rows, key=lambda r: (r.planner, r.scenario_id))
    with open(os.path.join(out_dir, "report.csv"), "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(REPORT_COLUMNS)
        for row in rows:
            wr.writerow(row.csv_values())
    with open(os.path.join(out_dir, "timings.csv"), "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(("planner", "scenario_id", "runtime_ms"))
        for row in rows:
            wr.writerow((row.planner, row.scenario_id,
                         f"{row.runtime_ms:.3f}"))
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump(report.aggregates, f, indent=2, sort_keys=True)
    with open(os.path.join(out_dir, "scatter.csv"), "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(("planner", "spl", "total_risk"))
        for planner, agg in sorted(report.aggregates.items()):
            wr.writerow((planner, f"{agg['spl']:.6f}",
                         f"{agg['total_risk']:.6f}"))
