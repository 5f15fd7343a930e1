"""Interleaved planning and execution in a semi-static world simulator.

The agent holds a belief map (initially the outdated prior), senses the
ground truth within a limited radius, incrementally updates its region
graph, predicts relaxation costs, plans a graph path, relaxes exactly the
soft regions on it, refines to a continuous path, and executes until the
next replanning boundary. Pending world events (superpixel perturbations)
fire on their scheduled step before the observation is taken.

Safety contract: the agent only ever steps onto cells whose belief class
is not hard, and every micro-step first syncs belief within the sensing
radius, so with a sensing radius of at least one cell the executed
trajectory cannot enter a hard truth cell unseen.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoPath, PlanExhausted
from .gnn import RelaxModel
from .search import diff_search, free_mask, grid_astar
from .semantic_map import RegionClass, SemanticGrid
from .superpixel import (
    RegionGraph,
    RegionNode,
    Segmentation,
    build_graph,
    default_target_n,
    slic_segment,
    update_graph,
)

DEFAULT_SENSING_RADIUS = 20.0  # meters


class Granularity(enum.Enum):
    GRAPH_PLAN = "graph"
    CONTINUOUS_WITHIN = "within"
    CONTINUOUS_UNION = "union"


@dataclass
class Plan:
    graph_path: list  # region ids
    relaxed_set: set  # region ids, soft regions on the graph path
    continuous_path: list  # [(x, y), ...]
    granularity: Granularity
    success: bool


@dataclass
class WorldSim:
    """Ground truth plus the agent's accumulated belief."""

    true_grid: SemanticGrid
    belief_grid: SemanticGrid
    agent_pos: tuple
    sensing_radius: float = DEFAULT_SENSING_RADIUS
    t: int = 0
    pending_events: list = field(default_factory=list)  # [(step, Perturbation)]
    truth_seg: Segmentation | None = None
    trajectory: list = field(default_factory=list)
    hard_truth_entries: int = 0

    def __post_init__(self):
        if not self.trajectory:
            self.trajectory.append(tuple(self.agent_pos))

    def _apply_due_events(self):
        due = [e for e in self.pending_events if e[0] <= self.t]
        if not due:
            return
        from .semantic_map import apply_perturbation

        self.pending_events = [e for e in self.pending_events if e[0] > self.t]
        for step, p in sorted(due, key=lambda e: e[0]):
            if self.truth_seg is None:
                self.truth_seg = slic_segment(
                    self.true_grid, default_target_n(self.true_grid))
            candidate = apply_perturbation(self.true_grid, self.truth_seg, p)
            r, c = candidate.cell_of(self.agent_pos)
            if candidate._classes[candidate.labels[r, c]] == RegionClass.HARD:
                # a blockage cannot materialize on top of the agent; the
                # event waits until the agent has moved off the area
                self.pending_events.append((self.t + 1, p))
                continue
            self.true_grid = candidate
            self.truth_seg = slic_segment(
                self.true_grid, default_target_n(self.true_grid))

    def _sense(self):
        """Copy truth into belief within the sensing radius."""
        h, w = self.true_grid.labels.shape
        res = self.true_grid.resolution
        ax, ay = self.agent_pos
        cols = (np.arange(w) + 0.5) * res
        rows = (np.arange(h) + 0.5) * res
        d2 = (cols[None, :] - ax) ** 2 + (rows[:, None] - ay) ** 2
        mask = d2 <= self.sensing_radius ** 2
        # the agent's own cell is always observed
        r, c = self.true_grid.cell_of(self.agent_pos)
        mask[r, c] = True
        if not np.array_equal(self.belief_grid.labels[mask],
                              self.true_grid.labels[mask]):
            lab = self.belief_grid.labels.copy()
            lab[mask] = self.true_grid.labels[mask]
            self.belief_grid = self.belief_grid.with_labels(lab)

    def move_agent(self, pos):
        self.agent_pos = tuple(pos)
        self.trajectory.append(self.agent_pos)
        r, c = self.true_grid.cell_of(pos)
        if self.true_grid._classes[self.true_grid.labels[r, c]] == RegionClass.HARD:
            self.hard_truth_entries += 1


def observe(sim: WorldSim) -> SemanticGrid:
    """Fire due events, sense, and return the updated belief."""
    sim._apply_due_events()
    sim._sense()
    return sim.belief_grid


# --------------------------------------------------------------------------
# planners
# --------------------------------------------------------------------------


@dataclass
class PlannerState:
    """Incremental segmentation/graph state carried across replans."""

    grid: SemanticGrid
    seg: Segmentation
    graph: RegionGraph


def _reflag(graph: RegionGraph, seg: Segmentation, start, goal) -> RegionGraph:
    """Same graph with start/goal flags moved to the given positions."""
    s = seg.region_of_point(start)
    g = seg.region_of_point(goal)
    if graph.nodes[s].is_start and graph.nodes[g].is_goal:
        return graph
    nodes = tuple(
        RegionNode(id=n.id, centroid=n.centroid, label=n.label,
                   n_labels=n.n_labels, is_start=(n.id == s),
                   is_goal=(n.id == g), region_class=n.region_class)
        for n in graph.nodes)
    return RegionGraph(nodes=nodes, edges=graph.edges,
                       adjacency=graph.adjacency, weights=graph.weights,
                       tau=graph.tau, map_diagonal_m=graph.map_diagonal_m)


def plan_step(state: PlannerState | None, belief: SemanticGrid,
              model: RelaxModel | None, start, goal,
              granularity: Granularity = Granularity.CONTINUOUS_UNION,
              target_n: int | None = None, tau: float = 1.0):
    """One relax-and-plan pass on the current belief.

    Returns (Plan, PlannerState). The graph updates incrementally from the
    previous state; a failed search yields a best-effort failure plan so
    the episode loop can keep observing.
    """
    if state is None or state.grid is not belief and not np.array_equal(
            state.grid.labels, belief.labels):
        if state is None:
            tn = target_n if target_n is not None else default_target_n(belief)
            seg = slic_segment(belief, tn)
            graph = build_graph(belief, seg, start, goal, tau=tau)
        else:
            graph, seg = update_graph(state.graph, state.seg, state.grid,
                                      belief, start=start, goal=goal)
        state = PlannerState(grid=belief, seg=seg, graph=graph)
    graph = _reflag(state.graph, state.seg, start, goal)
    state = PlannerState(grid=state.grid, seg=state.seg, graph=graph)

    if model is not None:
        psi = model.forward(graph).data
    else:
        psi = np.zeros(graph.n_nodes)
    result = diff_search(graph, psi)
    if not result.success:
        return Plan([], set(), [], granularity, False), state

    relaxed = {rid for rid in result.graph_path
               if graph.nodes[rid].region_class == RegionClass.SOFT}

    if granularity == Granularity.GRAPH_PLAN:
        poly = [graph.nodes[rid].centroid for rid in result.graph_path]
        return Plan(result.graph_path, relaxed, poly, granularity, True), state

    if granularity == Granularity.CONTINUOUS_WITHIN:
        allowed = np.isin(state.seg.assignment, list(result.graph_path))
    else:  # CONTINUOUS_UNION: free cells plus cells of relaxed regions
        allowed = free_mask(belief)
        if relaxed:
            allowed = allowed | np.isin(state.seg.assignment, list(relaxed))
    try:
        poly = grid_astar(belief, allowed, start, goal)
    except NoPath:
        return Plan(result.graph_path, relaxed, [], granularity, False), state
    return Plan(result.graph_path, relaxed, poly, granularity, True), state


def portal_waypoints(graph: RegionGraph, seg: Segmentation,
                     graph_path: list) -> list:
    """Midpoints of the shared boundary between consecutive path regions."""
    res = seg.resolution
    a = seg.assignment
    h, w = a.shape
    out = []
    for i, j in zip(graph_path, graph_path[1:]):
        rows, cols = seg.region_cells[i]
        pts = []
        for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            rr, cc = rows + dr, cols + dc
            ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
            hit = ok.copy()
            hit[ok] = a[rr[ok], cc[ok]] == j
            for r, c in zip(rows[hit], cols[hit]):
                pts.append(((c + 1.0 if dc > 0 else c if dc < 0 else c + 0.5) * res,
                            (r + 1.0 if dr > 0 else r if dr < 0 else r + 0.5) * res))
        if pts:
            xs = sorted(pts)
            out.append(xs[len(xs) // 2])
    return out


# --------------------------------------------------------------------------
# execution
# --------------------------------------------------------------------------


def resample_polyline(poly, spacing: float) -> list:
    """Points along poly every `spacing` meters (endpoints included)."""
    if len(poly) < 2:
        return list(poly)
    pts = [tuple(poly[0])]
    carry = 0.0
    for (x0, y0), (x1, y1) in zip(poly, poly[1:]):
        seg_len = math.hypot(x1 - x0, y1 - y0)
        if seg_len == 0:
            continue
        d = spacing - carry
        while d <= seg_len:
            f = d / seg_len
            pts.append((x0 + f * (x1 - x0), y0 + f * (y1 - y0)))
            d += spacing
        carry = seg_len - (d - spacing)
    if pts[-1] != tuple(poly[-1]):
        pts.append(tuple(poly[-1]))
    return pts


def execute(sim: WorldSim, plan: Plan, horizon: int | None = None,
            seg: Segmentation | None = None):
    """Advance along the plan one cell-length per micro-step.

    Stops at the horizon (micro-steps), at the next region transition when
    a segmentation is given and horizon is None, when the plan runs out,
    or as soon as the belief marks the next cell hard. Each micro-step
    senses before moving, so belief-hard checks see fresh truth nearby.
    """
    if not plan.continuous_path:
        raise PlanExhausted("plan has no continuous path")
    res = sim.true_grid.resolution
    pts = resample_polyline(plan.continuous_path, res)
    # start from the closest point on the plan to the agent
    d = [math.hypot(p[0] - sim.agent_pos[0], p[1] - sim.agent_pos[1])
         for p in pts]
    k0 = int(np.argmin(d))
    start_region = None
    if seg is not None:
        try:
            start_region = seg.region_of_point(sim.agent_pos)
        except Exception:
            start_region = None
    steps = 0
    for p in pts[k0 + 1:]:
        if horizon is not None and steps >= horizon:
            break
        sim._sense()
        r, c = sim.belief_grid.cell_of(p)
        if sim.belief_grid._classes[sim.belief_grid.labels[r, c]] == RegionClass.HARD:
            break  # path invalidated by what we just saw
        sim.move_agent(p)
        steps += 1
        if horizon is None and seg is not None and start_region is not None:
            try:
                if seg.region_of_point(p) != start_region:
                    break
            except Exception:
                break
    sim._sense()
    return sim.agent_pos


# --------------------------------------------------------------------------
# episodes
# --------------------------------------------------------------------------


@dataclass
class EpisodeStep:
    t: int
    agent_pos: tuple
    plan_id: int
    graph_path: list
    relaxed: list
    obs_digest: str


@dataclass
class EpisodeLog:
    scenario_id: str
    planner: str
    steps: list
    trajectory: list
    reached: bool
    success: bool
    hard_truth_entries: int
    executed_length_m: float
    relax_union: list  # region ids relaxed across replans (per-plan seg ids)
    relax_cells: list  # flat cell indices of relaxed regions (seg-independent)
    explicit_relaxation: bool  # planner emits relaxation sets itself

    def to_json(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "planner": self.planner,
            "reached": self.reached,
            "success": self.success,
            "hard_truth_entries": self.hard_truth_entries,
            "executed_length_m": self.executed_length_m,
            "relax_union": list(self.relax_union),
            "relax_cells": list(self.relax_cells),
            "explicit_relaxation": self.explicit_relaxation,
            "trajectory": [[float(x), float(y)] for (x, y) in self.trajectory],
            "steps": [
                {"t": s.t, "agent_pos": list(s.agent_pos), "plan_id": s.plan_id,
                 "graph_path": list(s.graph_path), "relaxed": list(s.relaxed),
                 "obs_digest": s.obs_digest}
                for s in self.steps
            ],
        }

    @staticmethod
    def from_json(d: dict) -> "EpisodeLog":
        return EpisodeLog(
            scenario_id=d["scenario_id"], planner=d["planner"],
            steps=[EpisodeStep(t=s["t"], agent_pos=tuple(s["agent_pos"]),
                               plan_id=s["plan_id"],
                               graph_path=list(s["graph_path"]),
                               relaxed=list(s["relaxed"]),
                               obs_digest=s["obs_digest"])
                   for s in d.get("steps", [])],
            trajectory=[tuple(p) for p in d["trajectory"]],
            reached=d["reached"], success=d["success"],
            hard_truth_entries=d["hard_truth_entries"],
            executed_length_m=d["executed_length_m"],
            relax_union=list(d.get("relax_union", [])),
            relax_cells=list(d.get("relax_cells", [])),
            explicit_relaxation=d.get("explicit_relaxation", False))


def save_episode(log: EpisodeLog, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(log.to_json(), f)


def path_length(poly) -> float:
    return float(sum(math.hypot(x1 - x0, y1 - y0)
                     for (x0, y0), (x1, y1) in zip(poly, poly[1:])))


def _digest(grid: SemanticGrid) -> str:
    return hashlib.sha1(grid.labels.tobytes()).hexdigest()[:12]


def _reached(sim: WorldSim, goal, seg: Segmentation | None) -> bool:
    """Goal test: same cell, or same region when a segmentation is known."""
    if sim.true_grid.cell_of(sim.agent_pos) == sim.true_grid.cell_of(goal):
        return True
    if seg is not None:
        try:
            return (seg.region_of_point(sim.agent_pos)
                    == seg.region_of_point(goal))
        except Exception:
            return False
    return False


class ReplanPolicy:
    """Callable planner protocol for episodes: plan(sim, pos, goal)."""

    name = "planner"
    explicit_relaxation = False

    def plan(self, sim: WorldSim, pos, goal) -> Plan:
        raise NotImplementedError

    def exec_seg(self) -> Segmentation | None:
        return None

    def relaxed_cells(self, plan: Plan) -> set:
        """Flat cell indices of the plan's relaxed regions, if any."""
        return set()


class RelaxPolicy(ReplanPolicy):
    """The learned relax-and-plan loop (incremental graph, cost model)."""

    name = "surenav"
    explicit_relaxation = True

    def __init__(self, model: RelaxModel | None, target_n: int | None = None,
                 tau: float = 1.0, replan_only_on_change: bool = False,
                 granularity: Granularity = Granularity.CONTINUOUS_UNION):
        self.model = model
        self.target_n = target_n
        self.tau = tau
        self.state = None
        self.replan_only_on_change = replan_only_on_change
        self.granularity = granularity
        self._last = None  # (belief digest, pos cell, plan)

    def plan(self, sim: WorldSim, pos, goal):
        key = (_digest(sim.belief_grid), sim.belief_grid.cell_of(pos))
        if (self.replan_only_on_change and self._last is not None
                and self._last[0] == key):
            return self._last[1]
        plan, self.state = plan_step(self.state, sim.belief_grid, self.model,
                                     pos, goal, granularity=self.granularity,
                                     target_n=self.target_n, tau=self.tau)
        self._last = (key, plan)
        return plan

    def exec_seg(self):
        return self.state.seg if self.state is not None else None

    def relaxed_cells(self, plan: Plan) -> set:
        if self.state is None:
            return set()
        w = self.state.seg.assignment.shape[1]
        out = set()
        for rid in plan.relaxed_set:
            rows, cols = self.state.seg.region_cells[rid]
            out.update(int(r) * w + int(c) for r, c in zip(rows, cols))
        return out


def run_episode(sim: WorldSim, policy: ReplanPolicy, goal,
                max_steps: int | None = None,
                scenario_id: str = "") -> EpisodeLog:
    """Loop observe -> plan -> execute until the goal region is reached or
    the step budget runs out. Failures are encoded in the log, not raised."""
    if max_steps is None:
        max_steps = 10 * sim.true_grid.width * sim.true_grid.height
    steps = []
    relax_union = set()
    relax_cells = set()
    plan_id = 0
    reached = False
    for t in range(max_steps):
        sim.t = t
        observe(sim)
        if _reached(sim, goal, policy.exec_seg()):
            reached = True
            break
        plan = policy.plan(sim, sim.agent_pos, goal)
        plan_id += 1
        relax_union |= set(plan.relaxed_set)
        relax_cells |= policy.relaxed_cells(plan)
        steps.append(EpisodeStep(
            t=t, agent_pos=sim.agent_pos, plan_id=plan_id,
            graph_path=list(plan.graph_path),
            relaxed=sorted(plan.relaxed_set),
            obs_digest=_digest(sim.belief_grid)))
        if plan.success and plan.continuous_path:
            pos_before = sim.agent_pos
            execute(sim, plan, horizon=None, seg=policy.exec_seg())
            if sim.agent_pos == pos_before:
                # plan made no progress (e.g. blocked next cell); take the
                # next observation and replan
                continue
    success = reached and sim.hard_truth_entries == 0
    return EpisodeLog(
        scenario_id=scenario_id, planner=policy.name, steps=steps,
        trajectory=list(sim.trajectory), reached=reached, success=success,
        hard_truth_entries=sim.hard_truth_entries,
        executed_length_m=path_length(sim.trajectory),
        relax_union=sorted(relax_union),
        relax_cells=sorted(relax_cells),
        explicit_relaxation=policy.explicit_relaxation)
