"""Command-line entry points for every pipeline stage.

Each subcommand is a pure function of its input files, flags and seed;
the fully resolved configuration is logged before the run so any result
can be reproduced from its log line. Errors exit nonzero with a
machine-readable JSON message on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import mapgen
from .errors import RelaxNavError
from .gnn import RelaxModel, load_model, save_model
from .metrics import run_benchmark
from .semantic_map import (
    Perturbation,
    load_map,
    load_risk_table,
    load_scenarios,
    save_map,
    save_scenarios,
)
from .simulate import (
    Granularity,
    RelaxPolicy,
    WorldSim,
    plan_step,
    run_episode,
    save_episode,
)
from .superpixel import (
    build_graph,
    default_target_n,
    save_graph,
    save_segmentation,
    slic_segment,
)
from .training import (
    LossConfig,
    load_demonstrations,
    oracle_expert,
    save_demonstrations,
    train,
)


def _log_config(args: argparse.Namespace):
    cfg = {k: (str(v) if isinstance(v, Path) else v)
           for k, v in vars(args).items() if k != "func"}
    print(f"config {json.dumps(cfg, sort_keys=True)}", file=sys.stderr)


def _default_endpoints(grid):
    free_r, free_c = np.nonzero(grid.class_map() == 0)
    res = grid.resolution
    s = ((free_c[0] + 0.5) * res, (free_r[0] + 0.5) * res)
    g = ((free_c[-1] + 0.5) * res, (free_r[-1] + 0.5) * res)
    return s, g


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_segment(args):
    grid = load_map(args.map)
    target = args.n or default_target_n(grid)
    seg = slic_segment(grid, target, compactness=args.compactness)
    if args.start and args.goal:
        start, goal = tuple(args.start), tuple(args.goal)
    else:
        start, goal = _default_endpoints(grid)
    graph = build_graph(grid, seg, start, goal, tau=args.tau)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.map).stem
    save_segmentation(seg, out / f"{stem}.seg.json")
    save_graph(graph, out / f"{stem}.graph.json")
    print(json.dumps({"n_regions": seg.n_regions,
                      "n_edges": len(graph.edges)}))


def cmd_perturb(args):
    grid = load_map(args.map)
    seg = slic_segment(grid, args.n or default_target_n(grid))
    rng = np.random.default_rng(args.rng)
    blocked = None
    for i, (name, cls) in enumerate(grid.label_table):
        if int(cls) == 2 and name == "blocked":
            blocked = i
    if blocked is None:  # fall back to any hard label
        blocked = next(i for i, (_, c) in enumerate(grid.label_table)
                       if int(c) == 2)
    new_label = args.label if args.label is not None else blocked
    if args.along:
        # seeds sampled along a provided route (first demo in the file)
        route = load_demonstrations(args.along)[0].polyline
        candidates = [tuple(p) for p in route[1:-1]] or [tuple(route[0])]
    else:
        trav_r, trav_c = np.nonzero(grid.traversable_mask())
        res = grid.resolution
        candidates = None
    out_grid = grid
    applied = []
    from .semantic_map import apply_perturbation

    for _ in range(args.seeds):
        if candidates is not None:
            seed = candidates[int(rng.integers(0, len(candidates)))]
        else:
            k = int(rng.integers(0, trav_r.size))
            seed = ((trav_c[k] + 0.5) * res, (trav_r[k] + 0.5) * res)
        p = Perturbation(seed_position=seed, radius=args.radius,
                         new_label=new_label)
        try:
            out_grid = out_grid.with_labels(
                apply_perturbation(grid, seg, p).labels
                if out_grid is grid else _merge_labels(out_grid, grid, seg, p))
            applied.append(p.to_json())
        except RelaxNavError:
            continue
    save_map(out_grid, args.out)
    print(json.dumps({"applied": applied}))


def _merge_labels(cur, base, seg, p):
    from .semantic_map import apply_perturbation

    delta = apply_perturbation(base, seg, p)
    out = cur.labels.copy()
    changed = delta.labels != base.labels
    out[changed] = delta.labels[changed]
    return out


def cmd_oracle(args):
    grid = load_map(args.map)
    scenarios = load_scenarios(args.scenarios)
    cost_table = load_risk_table(args.cost_table) if args.cost_table else dict(
        mapgen.DEFAULT_RISK)
    seg = slic_segment(grid, args.n or default_target_n(grid))
    demos = []
    for scen in scenarios:
        truth = mapgen.apply_scenario_perturbations(grid, seg, scen)
        demos.append(oracle_expert(truth, scen, cost_table))
    save_demonstrations(demos, args.out)
    print(json.dumps({"demos": len(demos)}))


def cmd_train(args):
    data = Path(args.dataset)
    maps = {p.stem: load_map(p) for p in sorted(data.glob("*.smap"))}
    scenarios = []
    for p in sorted(data.glob("*.scenario.json")):
        scenarios.extend(load_scenarios(p))
    demos = {}
    for p in sorted(data.glob("*.demos.jsonl")):
        for d in load_demonstrations(p):
            demos[d.scenario_id] = d
    seg_cache = {}
    dataset = []
    for scen in scenarios:
        if scen.scenario_id not in demos:
            continue
        grid = maps[scen.map_id]
        if scen.map_id not in seg_cache:
            seg_cache[scen.map_id] = slic_segment(
                grid, args.n or default_target_n(grid))
        truth = mapgen.apply_scenario_perturbations(
            grid, seg_cache[scen.map_id], scen)
        dataset.append((truth, scen, demos[scen.scenario_id]))
    if not dataset:
        raise RelaxNavError("dataset directory yielded no training triples")
    n_labels = next(iter(maps.values())).n_labels
    model = RelaxModel(n_labels=n_labels, rng_seed=args.seed)
    cfg = LossConfig(w_fp=args.wfp, w_fn=args.wfn, gamma=args.gamma)
    model, history = train(dataset, model, cfg, epochs=args.epochs,
                           lr=args.lr, batch_size=args.batch_size,
                           rng_seed=args.seed, target_n=args.n)
    save_model(model, args.out)
    print(json.dumps({"epochs": args.epochs, "initial_loss": history[0],
                      "final_loss": history[-1]}))


def cmd_plan(args):
    grid = load_map(args.map)
    model = load_model(args.model) if args.model else None
    scen = load_scenarios(args.scenario)[0]
    granularity = Granularity(args.granularity)
    plan, state = plan_step(None, grid, model, scen.start, scen.goal,
                            granularity=granularity, target_n=args.n)
    out = {
        "success": plan.success,
        "graph_path": list(plan.graph_path),
        "relaxed_regions": sorted(plan.relaxed_set),
        "polyline": [[x, y] for (x, y) in plan.continuous_path],
    }
    if args.out:
        with open(args.out, "w") as f:
            json.dump(out, f)
    if args.render:
        from .render import png_bytes, render_overlay

        cells = set()
        w = state.seg.assignment.shape[1]
        for rid in plan.relaxed_set:
            rows, cols = state.seg.region_cells[rid]
            cells.update(int(r) * w + int(c) for r, c in zip(rows, cols))
        img = render_overlay(grid, paths=[plan.continuous_path],
                             relaxed_cells=cells)
        with open(args.render, "wb") as f:
            f.write(png_bytes(img))
    print(json.dumps({"success": plan.success,
                      "relaxed": sorted(plan.relaxed_set)}))


def cmd_simulate(args):
    prior = load_map(args.map_prior)
    model = load_model(args.model) if args.model else None
    scen = load_scenarios(args.scenario)[0]
    if args.map_truth:
        truth = load_map(args.map_truth)
    else:
        seg = slic_segment(prior, args.n or default_target_n(prior))
        truth = mapgen.apply_scenario_perturbations(prior, seg, scen)
    sim = WorldSim(true_grid=truth, belief_grid=prior, agent_pos=scen.start,
                   sensing_radius=args.rho)
    policy = RelaxPolicy(model, target_n=args.n)
    log = run_episode(sim, policy, scen.goal, max_steps=args.max_steps,
                      scenario_id=scen.scenario_id)
    save_episode(log, args.out)
    print(json.dumps({"reached": log.reached, "success": log.success,
                      "length_m": log.executed_length_m}))


def cmd_bench(args):
    with open(args.config) as f:
        cfg = json.load(f)
    base = Path(args.config).parent
    maps = {mid: load_map(base / p) for mid, p in cfg["maps"].items()}
    scenarios = []
    for p in cfg["scenarios"]:
        scenarios.extend(load_scenarios(base / p))
    model = load_model(base / cfg["model"]) if cfg.get("model") else None
    demos_cfg = None
    if cfg.get("baseline_demos"):
        demos_cfg = []
        for entry in cfg["baseline_demos"]:
            g = load_map(base / entry["map"])
            s = slic_segment(g, cfg.get("target_n") or default_target_n(g))
            demos_cfg.append((g, s, load_demonstrations(base / entry["demos"])))
    report = run_benchmark(
        maps, scenarios, cfg.get("planners", ["surenav"]), model=model,
        out_dir=cfg.get("out_dir", args.out), target_n=cfg.get("target_n"),
        sensing_radius=cfg.get("sensing_radius", 20.0),
        baseline_demos=demos_cfg, max_steps=cfg.get("max_steps"))
    print(json.dumps(report.aggregates, sort_keys=True))


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    app = create_app(args.data_dir)
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")


def cmd_makeworld(args):
    grid = mapgen.corridor_world(args.seed, width=args.width,
                                 height=args.height)
    save_map(grid, args.out)
    if args.scenarios:
        rng = np.random.default_rng(args.seed)
        seg = slic_segment(grid, args.n or default_target_n(grid))
        scens = []
        for i in range(args.scenarios):
            scen = mapgen.sample_cross_scenario(grid, rng,
                                                Path(args.out).stem, i)
            if rng.uniform() < 0.5:
                p = mapgen.perturb_along_route(grid, seg, scen, rng)
                if p is not None:
                    scen = p
            scens.append(scen)
        save_scenarios(scens, Path(args.out).with_suffix(".scenario.json"))
    print(json.dumps({"map": str(args.out)}))


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="relaxnav",
        description="constraint-relaxation navigation toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="superpixel segmentation + graph")
    p.add_argument("map")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--compactness", type=float, default=10.0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--start", type=float, nargs=2, default=None)
    p.add_argument("--goal", type=float, nargs=2, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("perturb", help="inject superpixel perturbations")
    p.add_argument("map")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--label", type=int, default=None)
    p.add_argument("--rng", type=int, default=0)
    p.add_argument("--along", default=None,
                   help="demos file; seeds sample along its first route")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("oracle", help="generate oracle demonstrations")
    p.add_argument("map")
    p.add_argument("scenarios")
    p.add_argument("--cost-table", default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("train", help="train the relaxation cost estimator")
    p.add_argument("dataset")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--wfp", type=float, default=0.45)
    p.add_argument("--wfn", type=float, default=0.55)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("plan", help="one-shot relax-and-plan")
    p.add_argument("map")
    p.add_argument("scenario")
    p.add_argument("--model", default=None)
    p.add_argument("--granularity", default="union",
                   choices=[g.value for g in Granularity])
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--render", default=None)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="run one semi-static episode")
    p.add_argument("map_prior")
    p.add_argument("scenario")
    p.add_argument("--map-truth", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--rho", type=float, default=20.0)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="benchmark sweep across planners")
    p.add_argument("config")
    p.add_argument("--out", default="bench_out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="HTTP service for the companion UI")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--data-dir", required=True)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("makeworld", help="generate a synthetic map")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=48)
    p.add_argument("--height", type=int, default=48)
    p.add_argument("--scenarios", type=int, default=0)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_makeworld)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    _log_config(args)
    try:
        args.func(args)
    except RelaxNavError as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return 2
    except OSError as e:
        print(json.dumps({"error": "IOError", "message": str(e)}),
              file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
