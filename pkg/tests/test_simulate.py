import numpy as np
import pytest

from conftest import make_grid, uniform_grid
from relaxnav.errors import PlanExhausted
from relaxnav.mapgen import (
    LABEL_TABLE,
    corridor_world,
    perturb_along_route,
    sample_cross_scenario,
)
from relaxnav.semantic_map import Perturbation, RegionClass
from relaxnav.simulate import (
    Granularity,
    Plan,
    RelaxPolicy,
    WorldSim,
    execute,
    observe,
    plan_step,
    portal_waypoints,
    resample_polyline,
    run_episode,
)
from relaxnav.superpixel import slic_segment

BLOCKED = 6


def free_world(h=16, w=16, rho=50.0, pos=(0.5, 0.5)):
    grid = uniform_grid(h, w, table=LABEL_TABLE)
    return WorldSim(true_grid=grid, belief_grid=grid, agent_pos=pos,
                    sensing_radius=rho)


# --------------------------------------------------------------------------
# observation model
# --------------------------------------------------------------------------


def test_full_radius_syncs_whole_map():
    grid = uniform_grid(10, 10, table=LABEL_TABLE)
    lab = grid.labels.copy()
    lab[7, 7] = 4
    truth = make_grid(lab, LABEL_TABLE)
    sim = WorldSim(true_grid=truth, belief_grid=grid, agent_pos=(0.5, 0.5),
                   sensing_radius=100.0)
    belief = observe(sim)
    assert np.array_equal(belief.labels, truth.labels)


def test_zero_radius_sees_only_own_cell():
    grid = uniform_grid(10, 10, table=LABEL_TABLE)
    lab = grid.labels.copy()
    lab[0, 0] = 1  # under the agent
    lab[5, 5] = 4  # far away
    truth = make_grid(lab, LABEL_TABLE)
    sim = WorldSim(true_grid=truth, belief_grid=grid, agent_pos=(0.5, 0.5),
                   sensing_radius=0.0)
    belief = observe(sim)
    assert belief.labels[0, 0] == 1
    assert belief.labels[5, 5] == 0  # unchanged in belief


def test_event_timeline_visibility():
    grid = uniform_grid(12, 12, table=LABEL_TABLE)
    seg = slic_segment(grid, 4)
    p = Perturbation(seed_position=(9.0, 9.0), radius=0, new_label=BLOCKED)
    sim = WorldSim(true_grid=grid, belief_grid=grid, agent_pos=(6.0, 6.0),
                   sensing_radius=50.0, pending_events=[(5, p)],
                   truth_seg=seg)
    sim.t = 4
    belief = observe(sim)
    assert np.all(belief.labels != BLOCKED)  # not fired yet at step 4
    sim.t = 5
    belief = observe(sim)
    assert (belief.labels == BLOCKED).any()  # fired and in range


# --------------------------------------------------------------------------
# plan_step
# --------------------------------------------------------------------------


def test_plan_on_open_map_is_straight_with_no_relaxations():
    grid = uniform_grid(12, 12, table=LABEL_TABLE)
    plan, state = plan_step(None, grid, None, (0.5, 6.5), (11.5, 6.5),
                            target_n=9)
    assert plan.success
    assert plan.relaxed_set == set()
    length = sum(np.hypot(b[0] - a[0], b[1] - a[1]) for a, b in
                 zip(plan.continuous_path, plan.continuous_path[1:]))
    assert abs(length - 11.0) < 1e-9


def test_plan_relaxes_soft_bypass_and_stays_inside_admissible():
    # hard wall with one grass gap: relaxation is forced
    lab = np.zeros((15, 21), dtype=np.uint8)
    lab[:, 10] = 4
    lab[6:10, 10] = 1
    grid = make_grid(lab, LABEL_TABLE)
    plan, state = plan_step(None, grid, None, (0.5, 7.5), (20.5, 7.5),
                            target_n=12)
    assert plan.success
    assert len(plan.relaxed_set) >= 1
    # Eq-style set equality: relaxed set == soft regions on the graph path
    soft_on_path = {rid for rid in plan.graph_path
                    if state.graph.nodes[rid].region_class == RegionClass.SOFT}
    assert plan.relaxed_set == soft_on_path
    # admissible set membership: every path cell free or inside relaxed
    allowed_ids = plan.relaxed_set
    for p in plan.continuous_path:
        r, c = grid.cell_of(p)
        cls = grid.class_map()[r, c]
        assert cls == RegionClass.FREE or \
            int(state.seg.assignment[r, c]) in allowed_ids


def test_graph_plan_granularity_returns_centroids():
    grid = uniform_grid(12, 12, table=LABEL_TABLE)
    plan, state = plan_step(None, grid, None, (1.5, 1.5), (10.5, 10.5),
                            granularity=Granularity.GRAPH_PLAN, target_n=9)
    assert plan.success
    cents = [state.graph.nodes[rid].centroid for rid in plan.graph_path]
    assert plan.continuous_path == cents


def test_plan_step_is_deterministic():
    grid = corridor_world(7, width=32, height=32)
    p1, s1 = plan_step(None, grid, None, (0.5, 16.5), (31.5, 16.5),
                       target_n=20)
    p2, s2 = plan_step(None, grid, None, (0.5, 16.5), (31.5, 16.5),
                       target_n=20)
    assert p1.graph_path == p2.graph_path
    assert p1.continuous_path == p2.continuous_path


def test_portal_waypoints_lie_on_shared_boundary():
    lab = np.zeros((10, 10), dtype=np.uint8)
    lab[:, 5:] = 1
    grid = make_grid(lab, LABEL_TABLE)
    seg = slic_segment(grid, 2)
    from relaxnav.superpixel import build_graph

    graph = build_graph(grid, seg, (2.0, 5.0), (8.0, 5.0))
    pts = portal_waypoints(graph, seg, [graph.start_node, graph.goal_node])
    assert len(pts) == 1
    assert abs(pts[0][0] - 5.0) < 1e-9  # on the column-5 boundary


# --------------------------------------------------------------------------
# execution
# --------------------------------------------------------------------------


def test_resample_polyline_spacing():
    poly = [(0.0, 0.0), (5.0, 0.0)]
    pts = resample_polyline(poly, 1.0)
    assert pts[0] == (0.0, 0.0) and pts[-1] == (5.0, 0.0)
    steps = [np.hypot(b[0] - a[0], b[1] - a[1])
             for a, b in zip(pts, pts[1:])]
    assert all(s <= 1.0 + 1e-9 for s in steps)


def test_execute_zero_horizon_keeps_position():
    sim = free_world()
    plan = Plan([], set(), [(0.5, 0.5), (5.5, 0.5)],
                Granularity.CONTINUOUS_UNION, True)
    pos = execute(sim, plan, horizon=0)
    assert pos == (0.5, 0.5)


def test_execute_long_horizon_reaches_path_end():
    sim = free_world()
    plan = Plan([], set(), [(0.5, 0.5), (8.5, 0.5)],
                Granularity.CONTINUOUS_UNION, True)
    pos = execute(sim, plan, horizon=100)
    assert abs(pos[0] - 8.5) < 1e-9


def test_execute_raises_on_empty_plan():
    sim = free_world()
    with pytest.raises(PlanExhausted):
        execute(sim, Plan([], set(), [], Granularity.CONTINUOUS_UNION, False))


def test_execute_halts_before_newly_seen_blockage():
    grid = uniform_grid(6, 20, table=LABEL_TABLE)
    lab = grid.labels.copy()
    lab[0, 10] = 4  # hidden blockage on the route
    truth = make_grid(lab, LABEL_TABLE)
    sim = WorldSim(true_grid=truth, belief_grid=grid, agent_pos=(0.5, 0.5),
                   sensing_radius=3.0)
    plan = Plan([], set(), [(0.5, 0.5), (19.5, 0.5)],
                Granularity.CONTINUOUS_UNION, True)
    pos = execute(sim, plan, horizon=100)
    assert pos[0] < 10.0  # stopped short of the blocked cell
    assert sim.hard_truth_entries == 0


# --------------------------------------------------------------------------
# full episodes
# --------------------------------------------------------------------------


def test_static_feasible_world_one_plan_no_relaxations():
    grid = uniform_grid(14, 14, table=LABEL_TABLE)
    sim = WorldSim(true_grid=grid, belief_grid=grid, agent_pos=(0.5, 0.5),
                   sensing_radius=50.0)
    pol = RelaxPolicy(None, target_n=9)
    log = run_episode(sim, pol, (13.5, 13.5), max_steps=200,
                      scenario_id="s")
    assert log.reached and log.success
    assert log.relax_union == []
    # one route suffices: every later plan is a tail of the first one
    first = tuple(log.steps[0].graph_path)
    for s in log.steps[1:]:
        tail = tuple(s.graph_path)
        assert tail == first[len(first) - len(tail):]


def test_every_route_needs_soft_relaxation():
    lab = np.zeros((15, 21), dtype=np.uint8)
    lab[:, 10] = 4
    lab[6:10, 10] = 1
    grid = make_grid(lab, LABEL_TABLE)
    # feasibility oracle: free-only graph cannot reach the goal
    from relaxnav.errors import NoPath
    from relaxnav.search import free_mask, grid_astar

    with pytest.raises(NoPath):
        grid_astar(grid, free_mask(grid), (0.5, 7.5), (20.5, 7.5))
    sim = WorldSim(true_grid=grid, belief_grid=grid, agent_pos=(0.5, 7.5),
                   sensing_radius=50.0)
    pol = RelaxPolicy(None, target_n=12)
    log = run_episode(sim, pol, (20.5, 7.5), max_steps=300, scenario_id="s")
    assert log.reached and log.success
    assert len(log.relax_union) >= 1


def test_goal_enclosed_by_hard_truth_fails_cleanly():
    lab = np.zeros((12, 12), dtype=np.uint8)
    lab[8:, 8:] = 0
    lab[7, 7:] = 4
    lab[7:, 7] = 4  # goal corner walled off
    grid = make_grid(lab, LABEL_TABLE)
    sim = WorldSim(true_grid=grid, belief_grid=grid, agent_pos=(0.5, 0.5),
                   sensing_radius=50.0)
    pol = RelaxPolicy(None, target_n=9)
    log = run_episode(sim, pol, (10.5, 10.5), max_steps=60, scenario_id="s")
    assert not log.reached and not log.success


def test_mid_episode_blockage_triggers_replan_and_success():
    grid = corridor_world(12, width=40, height=40, n_walls=1)
    seg = slic_segment(grid, 30)
    rng = np.random.default_rng(1)
    scen = sample_cross_scenario(grid, rng, "m", 0)
    pscen = perturb_along_route(grid, seg, scen, rng)
    assert pscen is not None  # seed chosen so a blocking event exists
    from relaxnav.mapgen import apply_scenario_perturbations

    truth = apply_scenario_perturbations(grid, seg, pscen)
    sim = WorldSim(true_grid=truth, belief_grid=grid, agent_pos=scen.start,
                   sensing_radius=8.0)
    pol = RelaxPolicy(None, target_n=30)
    log = run_episode(sim, pol, scen.goal, max_steps=1000, scenario_id="s")
    assert log.reached and log.success
    assert log.hard_truth_entries == 0


def test_safety_agent_never_steps_on_hard_truth():
    for seed in range(5):
        grid = corridor_world(20 + seed, width=32, height=32)
        seg = slic_segment(grid, 20)
        rng = np.random.default_rng(seed)
        scen = sample_cross_scenario(grid, rng, "m", 0)
        pscen = perturb_along_route(grid, seg, scen, rng)
        from relaxnav.mapgen import apply_scenario_perturbations

        truth = (apply_scenario_perturbations(grid, seg, pscen)
                 if pscen else grid)
        sim = WorldSim(true_grid=truth, belief_grid=grid,
                       agent_pos=scen.start, sensing_radius=6.0)
        pol = RelaxPolicy(None, target_n=20)
        log = run_episode(sim, pol, scen.goal, max_steps=800,
                          scenario_id=f"s{seed}")
        assert log.hard_truth_entries == 0
        classes = truth.class_map()
        for p in log.trajectory:
            r, c = truth.cell_of(p)
            assert classes[r, c] != RegionClass.HARD


def test_episode_log_json_roundtrip(tmp_path):
    grid = uniform_grid(10, 10, table=LABEL_TABLE)
    sim = WorldSim(true_grid=grid, belief_grid=grid, agent_pos=(0.5, 0.5),
                   sensing_radius=50.0)
    pol = RelaxPolicy(None, target_n=4)
    log = run_episode(sim, pol, (9.5, 9.5), max_steps=100, scenario_id="rt")
    from relaxnav.simulate import EpisodeLog, save_episode
    import json

    path = tmp_path / "e.episode.json"
    save_episode(log, path)
    back = EpisodeLog.from_json(json.loads(path.read_text()))
    assert back.scenario_id == log.scenario_id
    assert back.reached == log.reached
    assert back.trajectory == [tuple(p) for p in log.trajectory]
    assert [s.t for s in back.steps] == [s.t for s in log.steps]


def test_grid_astar_accepts_callable_predicate():
    from relaxnav.search import grid_astar

    grid = uniform_grid(6, 6, table=LABEL_TABLE)
    poly = grid_astar(grid, lambda r, c: r != 3 or c == 5,
                      (0.5, 0.5), (0.5, 5.5))
    cells = {grid.cell_of(p) for p in poly}
    assert all(r != 3 or c == 5 for (r, c) in cells)


def test_replan_skip_flag_produces_identical_trajectory():
    grid = corridor_world(9, width=32, height=32, n_walls=1)
    rng = np.random.default_rng(2)
    scen = sample_cross_scenario(grid, rng, "m", 0)

    def run(flag):
        sim = WorldSim(true_grid=grid, belief_grid=grid,
                       agent_pos=scen.start, sensing_radius=50.0)
        pol = RelaxPolicy(None, target_n=20, replan_only_on_change=flag)
        return run_episode(sim, pol, scen.goal, max_steps=400,
                           scenario_id="s")

    a = run(False)
    b = run(True)
    assert a.trajectory == b.trajectory
    assert a.reached and b.reached
