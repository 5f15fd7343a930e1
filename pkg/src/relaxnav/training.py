"""End-to-end training of the relaxation-cost estimator.

The estimator trains through the differentiable search: each sample runs
the search under the current costs, compares the explored soft regions
against the soft regions a demonstration actually used, and backpropagates
the weighted false-positive/false-negative loss. The hard masks feed the
reported loss values and the per-sample weights; gradients flow through
the soft closed-set occupancy the search accumulates from its selection
weights.

Also provides a synthetic oracle expert (weighted grid A* with per-label
cell costs) standing in for human demonstrators at desk scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import (
    DivergedLoss,
    EmptyBatch,
    EmptyDataset,
    LengthMismatch,
)
from .gnn import RelaxModel
from .search import diff_search, grid_astar, traversable_mask

TRAIN_LAMBDA_SCALE = 3.0  # x mean edge weight; see train() docstring
from .semantic_map import RegionClass, Scenario, SemanticGrid
from .superpixel import (
    RegionGraph,
    Segmentation,
    build_graph,
    default_target_n,
    project_path,
    slic_segment,
)

SAMPLE_WEIGHT_PAIR = (0.5, 0.5)  # fixed fp/fn pair inside the sample weight


@dataclass
class Demonstration:
    """One expert trajectory and its projection onto a region graph."""

    scenario_id: str
    polyline: list  # [(x, y) meters, ...]
    region_sequence: list | None = None
    relaxed_truth: np.ndarray | None = None  # (N,) binary over graph nodes
    source: str = "oracle"  # "human" | "oracle"
    perturbation_index: int | None = None

    def to_json(self) -> dict:
        d = {"scenario_id": self.scenario_id, "source": self.source,
             "polyline": [[float(x), float(y)] for (x, y) in self.polyline]}
        if self.perturbation_index is not None:
            d["perturbation_index"] = self.perturbation_index
        return d

    @staticmethod
    def from_json(d: dict) -> "Demonstration":
        return Demonstration(
            scenario_id=d["scenario_id"],
            polyline=[tuple(p) for p in d["polyline"]],
            source=d.get("source", "human"),
            perturbation_index=d.get("perturbation_index"))


def save_demonstrations(demos, path, append: bool = False) -> None:
    """Newline-delimited records, one JSON object per demonstration."""
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as f:
        for demo in demos:
            f.write(json.dumps(demo.to_json()) + "\n")


def load_demonstrations(path) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(Demonstration.from_json(json.loads(line)))
    return out


@dataclass
class LossConfig:
    """Weights of the relaxation loss. The false-negative weight must
    exceed the false-positive weight (search exploration inflates false
    positives, so negatives need the heavier hand), but only mildly:
    a strong imbalance drags every region's cost toward zero before the
    estimator can discriminate."""

    w_fp: float = 0.45
    w_fn: float = 0.55
    gamma: float = 1.0
    sample_weights: tuple = SAMPLE_WEIGHT_PAIR

    def __post_init__(self):
        if self.w_fp < 0 or self.w_fn < 0:
            raise ValueError("loss weights must be non-negative")
        if not self.w_fn > self.w_fp:
            raise ValueError("w_fn must be greater than w_fp")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------


def relax_loss(v_rlx, v_star, w_fp: float, w_fn: float):
    """Weighted false-positive/false-negative relaxation error.

    (w_fp * v·(1-v*) + w_fn * (1-v)·v*) / (1 + |v*|_1). Accepts plain
    arrays (returns float) or a Tensor v_rlx (returns a Tensor for
    backprop, with v_star constant).
    """
    vs = np.asarray(v_star, dtype=np.float64)
    if isinstance(v_rlx, Tensor):
        if v_rlx.data.shape != vs.shape:
            raise LengthMismatch(
                f"{v_rlx.data.shape} vs {vs.shape}")
        denom = 1.0 + float(vs.sum())
        fp = ad.asum(v_rlx * Tensor(1.0 - vs)) * w_fp
        fn = ad.asum((1.0 - v_rlx) * Tensor(vs)) * w_fn
        return (fp + fn) * (1.0 / denom)
    v = np.asarray(v_rlx, dtype=np.float64)
    if v.shape != vs.shape:
        raise LengthMismatch(f"{v.shape} vs {vs.shape}")
    denom = 1.0 + vs.sum()
    return float((w_fp * (v * (1.0 - vs)).sum()
                  + w_fn * ((1.0 - v) * vs).sum()) / denom)


def sample_weight(v_rlx, v_star, gamma: float) -> float:
    """min(1, L^gamma) with the fixed (0.5, 0.5) loss weights."""
    loss = relax_loss(np.asarray(v_rlx), np.asarray(v_star),
                      *SAMPLE_WEIGHT_PAIR)
    return min(1.0, loss ** gamma)


def batch_loss(batch, cfg: LossConfig) -> float:
    """Mean of per-sample weighted relaxation losses over hard masks."""
    if not batch:
        raise EmptyBatch("batch_loss needs at least one sample")
    total = 0.0
    for result, demo in batch:
        v = np.asarray(getattr(result, "relaxed_mask", result))
        vs = np.asarray(getattr(demo, "relaxed_truth", demo))
        w = sample_weight(v, vs, cfg.gamma)
        total += w * relax_loss(v, vs, cfg.w_fp, cfg.w_fn)
    return total / len(batch)


# --------------------------------------------------------------------------
# demonstrations
# --------------------------------------------------------------------------


def project_demo(demo: Demonstration, seg: Segmentation,
                 graph: RegionGraph) -> Demonstration:
    """Fill the region sequence and the soft-region truth mask."""
    seq = project_path(seg, demo.polyline)
    truth = np.zeros(graph.n_nodes)
    for rid in seq:
        if graph.nodes[rid].region_class == RegionClass.SOFT:
            truth[rid] = 1.0
    return replace(demo, region_sequence=seq, relaxed_truth=truth)


def cost_table_to_cell_costs(grid: SemanticGrid, cost_table: dict) -> np.ndarray:
    """Per-cell penalty array from a label-name -> cost mapping."""
    per_label = np.zeros(grid.n_labels)
    for i, (name, _) in enumerate(grid.label_table):
        per_label[i] = float(cost_table.get(name, 0.0))
    return per_label[grid.labels]


def oracle_expert(grid: SemanticGrid, scenario: Scenario,
                  cost_table: dict) -> Demonstration:
    """Synthetic expert: weighted grid A* over free and soft cells.

    cost_table maps label names to a per-cell penalty added to the metric
    path length; labels with infinite penalty are never entered.
    """
    cell_cost = cost_table_to_cell_costs(grid, cost_table)
    allowed = traversable_mask(grid) & np.isfinite(cell_cost)
    path = grid_astar(grid, allowed, scenario.start, scenario.goal,
                      cell_cost=cell_cost)
    return Demonstration(scenario_id=scenario.scenario_id, polyline=path,
                         source="oracle")


# --------------------------------------------------------------------------
# optimizer
# --------------------------------------------------------------------------


class Adam:
    """Adaptive moment estimation over a flat parameter vector."""

    def __init__(self, n: int, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(n)
        self.v = np.zeros(n)

    def step(self, flat: np.ndarray, grad: np.ndarray):
        """Update flat in place."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        flat -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def clip_grad_norm(grad: np.ndarray, max_norm: float) -> float:
    total = float(np.sqrt((grad * grad).sum()))
    if total > max_norm and total > 0:
        grad *= max_norm / total
    return total


# --------------------------------------------------------------------------
# training loop
# --------------------------------------------------------------------------


@dataclass
class TrainItem:
    """A prepared training sample: graph plus projected demonstration."""

    graph: RegionGraph
    seg: Segmentation
    demo: Demonstration  # with relaxed_truth filled


def prepare_dataset(dataset, target_n: int | None = None,
                    tau: float = 1.0) -> list:
    """Build graphs and project demos for (grid, scenario, demo) triples.

    Segmentations are cached per grid object; graphs per (grid, start,
    goal).
    """
    seg_cache = {}
    items = []
    for grid, scenario, demo in dataset:
        key = id(grid)
        if key not in seg_cache:
            tn = target_n if target_n is not None else default_target_n(grid)
            seg_cache[key] = slic_segment(grid, tn)
        seg = seg_cache[key]
        graph = build_graph(grid, seg, scenario.start, scenario.goal, tau=tau)
        items.append(TrainItem(graph=graph, seg=seg,
                               demo=project_demo(demo, seg, graph)))
    return items


def train(dataset, model: RelaxModel, cfg: LossConfig | None = None,
          epochs: int = 200, lr: float = 1e-3, batch_size: int = 8,
          rng_seed: int = 0, grad_clip: float = 5.0,
          target_n: int | None = None, lambda_scale: float = TRAIN_LAMBDA_SCALE,
          cost_reg: float = 1e-4, progress=None):
    """Train the estimator through the differentiable search.

    dataset is a list of (grid, scenario, Demonstration) triples or of
    prepared TrainItems. Returns (model, history) where history is the
    per-epoch mean batch loss (hard-mask values). Deterministic for a
    fixed rng_seed.

    The search temperature during training is lambda_scale times the mean
    edge weight, much softer than the inference default: the forward pass
    is a hard argmin either way, but gradients only flow where selection
    weights are not saturated, and typical cost differences are several
    edge lengths.

    cost_reg puts a small quadratic anchor on the predicted costs:
    negligible at useful magnitudes, binding when Adam amplifies the faint
    gradients of a saturated search into runaway scores (beyond any
    plausible path cost every value is equivalent, so the anchor costs
    nothing in expressiveness).
    """
    if not dataset:
        raise EmptyDataset("no training samples")
    cfg = cfg or LossConfig()
    if isinstance(dataset[0], TrainItem):
        items = dataset
    else:
        items = prepare_dataset(dataset, target_n=target_n)
    lam_of = {}
    for item in items:
        edges = item.graph.edges
        mean_w = float(np.mean([w for (_, _, w) in edges])) if edges else 1.0
        lam_of[id(item)] = max(lambda_scale * mean_w, 1e-9)

    opt = Adam(model.n_params(), lr=lr)
    rng = np.random.default_rng(rng_seed)
    history = []
    n = len(items)
    half = max(1, epochs // 2)
    for epoch in range(epochs):
        # full step for the first half, cosine decay for the second:
        # route choices flip discretely as costs move, and a shrinking
        # step is what lets the loss settle instead of cycling
        if epoch >= half:
            opt.lr = lr * 0.5 * (1.0 + math.cos(
                math.pi * (epoch - half) / max(1, epochs - half)))
        order = rng.permutation(n)
        epoch_losses = []
        for b0 in range(0, n, batch_size):
            idxs = order[b0:b0 + batch_size]
            grad_total = np.zeros(model.n_params())
            records = []
            for i in idxs:
                item = items[i]
                truth = item.demo.relaxed_truth
                with Tape() as tape:
                    pt = model.tensors()
                    psi = model.forward(item.graph, pt)
                    result = diff_search(item.graph, psi,
                                         lam=lam_of[id(item)])
                    w_i = sample_weight(result.relaxed_mask, truth, cfg.gamma)
                    loss_t = relax_loss(result.soft_relaxed, truth,
                                        cfg.w_fp, cfg.w_fn) * (w_i / len(idxs))
                    if cost_reg > 0:
                        loss_t = loss_t + ad.amean(psi * psi) * (
                            cost_reg / len(idxs))
                    grads = tape.backward(loss_t)
                for k, t in pt.items():
                    g = grads.get(t)
                    if g is not None:
                        grad_total[model.slices[k]] += g.ravel()
                records.append((result, item.demo))
            hard = batch_loss(records, cfg)
            if not math.isfinite(hard):
                raise DivergedLoss(f"non-finite batch loss at epoch {epoch}")
            epoch_losses.append(hard)
            clip_grad_norm(grad_total, grad_clip)
            opt.step(model._flat, grad_total)
        history.append(float(np.mean(epoch_losses)))
        model.epoch = epoch + 1
        model.last_loss = history[-1]
        if progress is not None:
            progress(epoch, history[-1])
    return model, history
