"""Train the relaxation-cost estimator from synthetic expert paths.

Builds a small corpus of corridor worlds, generates oracle demonstrations
(weighted grid search with ground-truth per-label penalties), trains the
estimator through the differentiable search, and shows how learned costs
separate the regions the expert used from the ones it avoided.

Takes a couple of minutes. Run:  python3 demos/demo_training.py
"""

import numpy as np

from relaxnav import RelaxModel, build_graph, diff_search, slic_segment
from relaxnav.mapgen import make_corpus
from relaxnav.metrics import relax_iou
from relaxnav.semantic_map import RegionClass
from relaxnav.superpixel import project_path
from relaxnav.training import LossConfig, prepare_dataset, train

TARGET_N = 40

items, _ = make_corpus(n_maps=2, scen_per_map=12, seed=5, target_n=TARGET_N)
train_items, held = items[:20], items[20:]
print(f"{len(train_items)} training demos, {len(held)} held out")

prep = prepare_dataset(train_items, target_n=TARGET_N)
model = RelaxModel(n_labels=7, rng_seed=0)
model, history = train(prep, model, LossConfig(), epochs=60, rng_seed=0,
                       progress=lambda e, l: print(f"  epoch {e:3d} loss {l:.4f}")
                       if e % 10 == 0 else None)
print(f"loss {history[0]:.4f} -> {history[-1]:.4f}")

# learned costs by label, averaged over the training graphs
sums, counts = {}, {}
for it in prep:
    psi = model.forward(it.graph).data
    for node in it.graph.nodes:
        if node.region_class == RegionClass.SOFT:
            name = train_items[0][0].label_table[node.label][0]
            sums[name] = sums.get(name, 0.0) + psi[node.id]
            counts[name] = counts.get(name, 0) + 1
print("\nmean learned relaxation cost by label:")
for name in sorted(sums):
    print(f"  {name:8s} {sums[name] / counts[name]:.2f}")

# held-out agreement with the oracle's relaxed regions
ious = []
for truth, scen, demo in held:
    seg = slic_segment(truth, TARGET_N)
    graph = build_graph(truth, seg, scen.start, scen.goal)
    res = diff_search(graph, model.forward(graph).data)
    pred = {r for r in res.graph_path
            if graph.nodes[r].region_class == RegionClass.SOFT}
    ref = {r for r in project_path(seg, demo.polyline)
           if graph.nodes[r].region_class == RegionClass.SOFT}
    ious.append(relax_iou(pred, ref))
print(f"\nheld-out relaxation IoU vs oracle: {np.mean(ious):.3f}")
