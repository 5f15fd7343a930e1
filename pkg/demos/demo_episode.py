"""One semi-static episode: plan on an outdated map, adapt on contact.

The agent starts with the unperturbed map as its belief while a blockage
has already appeared on its intended route. Watch the interleaved loop
observe the change, relax a soft region, and reroute.

Run:  python3 demos/demo_episode.py
"""

import numpy as np

from relaxnav import RelaxPolicy, WorldSim, run_episode, slic_segment
from relaxnav.mapgen import (
    apply_scenario_perturbations,
    corridor_world,
    perturb_along_route,
    sample_cross_scenario,
)
from relaxnav.render import png_bytes, render_overlay

grid = corridor_world(seed=15, width=48, height=48)
seg = slic_segment(grid, 40)
rng = np.random.default_rng(4)
scen = sample_cross_scenario(grid, rng, "demo", 0)
pscen = perturb_along_route(grid, seg, scen, rng)
if pscen is None:
    raise SystemExit("could not find a blocking perturbation, try another seed")
truth = apply_scenario_perturbations(grid, seg, pscen)
blocked = int((truth.labels != grid.labels).sum())
print(f"scenario {scen.start} -> {scen.goal}; {blocked} cells newly blocked")

sim = WorldSim(true_grid=truth, belief_grid=grid, agent_pos=scen.start,
               sensing_radius=8.0)
policy = RelaxPolicy(model=None, target_n=40)  # zero costs: free relaxation
log = run_episode(sim, policy, scen.goal, max_steps=600, scenario_id="demo")

print(f"reached={log.reached} success={log.success} "
      f"length={log.executed_length_m:.1f} m over {len(log.steps)} replans")
print(f"regions relaxed along the way: {log.relax_union}")
replans = [s for s in log.steps if s.relaxed]
if replans:
    first = next(s for s in log.steps if s.relaxed)
    print(f"first relaxation at t={first.t}, agent at "
          f"({first.agent_pos[0]:.1f}, {first.agent_pos[1]:.1f})")

img = render_overlay(truth, paths=[log.trajectory],
                     relaxed_cells=log.relax_cells, scale=8)
with open("/tmp/demo_episode.png", "wb") as f:
    f.write(png_bytes(img))
print("wrote /tmp/demo_episode.png (trajectory over ground truth)")
