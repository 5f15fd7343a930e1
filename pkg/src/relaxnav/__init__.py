"""Constraint-relaxation navigation on superpixel region graphs.

Plans best-effort paths in over-constrained semi-static worlds: traversable
space is segmented into label-pure superpixels, a learned estimator prices
the relaxation of each soft region, and a differentiable graph search turns
those prices into routes. An interleaved observe/plan/execute loop carries
the method through worlds that change mid-mission.
"""

from . import autodiff
from .autodiff import Tape, Tensor
from .baselines import (
    ClassOrder,
    COAStarPolicy,
    DStarLite,
    DStarPolicy,
    LabelCostTable,
    RCRPolicy,
    class_order_from_demos,
    coa_star,
    derive_costs,
    rcr_plan,
)
from .gnn import ModelCheckpoint, RelaxModel, load_model, predict_costs, save_model
from .mapgen import DEFAULT_RISK, corridor_world, make_corpus
from .metrics import (
    MetricReport,
    discrete_frechet,
    frechet,
    relax_iou,
    run_benchmark,
    spl,
    success,
    total_risk,
)
from .search import (
    SearchResult,
    SearchState,
    diff_search,
    expand,
    grid_astar,
    heuristic,
    select_node,
)
from .semantic_map import (
    Perturbation,
    RegionClass,
    Scenario,
    SemanticGrid,
    apply_perturbation,
    load_map,
    region_class_of,
    sample_scenarios,
    save_map,
)
from .simulate import (
    EpisodeLog,
    Granularity,
    Plan,
    RelaxPolicy,
    WorldSim,
    execute,
    observe,
    plan_step,
    run_episode,
)
from .superpixel import (
    RegionGraph,
    RegionNode,
    Segmentation,
    boundary_affinity,
    build_graph,
    project_path,
    slic_segment,
    update_graph,
)
from .training import (
    Demonstration,
    LossConfig,
    batch_loss,
    oracle_expert,
    project_demo,
    relax_loss,
    sample_weight,
    train,
)

__version__ = "0.1.0"
