"""Exception hierarchy shared by all relaxnav modules."""


class RelaxNavError(Exception):
    """Base class for all errors raised by this package."""


# --- map and file format errors ---

class FormatError(RelaxNavError):
    """Malformed map, checkpoint or scenario file."""


class VersionMismatch(FormatError):
    """Checkpoint version not supported by this build."""


class OutOfBounds(RelaxNavError):
    """Cell or point outside the map."""


class SeedOutOfBounds(OutOfBounds):
    """Perturbation seed outside the map."""


class SeedOnHardRegion(RelaxNavError):
    """Perturbation seed fell on a non-traversable cell."""


class Infeasible(RelaxNavError):
    """No admissible start/goal pair found within the retry budget."""


# --- segmentation / graph errors ---

class NoTraversableSpace(RelaxNavError):
    """Map has no free or soft cells to segment."""


class UnknownRegion(RelaxNavError):
    """Region id not present in the segmentation."""


class StartOnHard(RelaxNavError):
    """Start position lies on a hard cell."""


class GoalOnHard(RelaxNavError):
    """Goal position lies on a hard cell."""


class DimensionMismatch(RelaxNavError):
    """Grids or arrays with incompatible dimensions."""


class PointOnHard(RelaxNavError):
    """Path point lies on a hard cell."""


class PointOutOfBounds(OutOfBounds):
    """Path point outside the map."""


# --- autodiff errors ---

class ShapeMismatch(RelaxNavError):
    """Tensor operands with incompatible shapes."""


class NonFiniteValue(RelaxNavError):
    """NaN or Inf produced while finite-checking mode is on."""


class NotScalar(RelaxNavError):
    """backward() called on a non-scalar tensor."""


# --- search errors ---

class EmptyOpenSet(RelaxNavError):
    """select_node called with nothing left to expand."""


class NodeNotOpen(RelaxNavError):
    """expand called on a node outside the open set."""


class NoPath(RelaxNavError):
    """Search exhausted without reaching the goal."""


class StepBudgetExceeded(RelaxNavError):
    """Search hit its expansion budget."""


class DimMismatch(RelaxNavError):
    """Model and graph disagree on feature dimensions."""


# --- training errors ---

class LengthMismatch(RelaxNavError):
    """Masks of different lengths passed to a loss."""


class EmptyBatch(RelaxNavError):
    """batch_loss called with no samples."""


class EmptyDataset(RelaxNavError):
    """train called with no samples."""


class EmptyDemos(RelaxNavError):
    """Cost derivation needs at least one demonstration."""


class DivergedLoss(RelaxNavError):
    """Training produced a non-finite loss."""


# --- execution / metric errors ---

class PlanExhausted(RelaxNavError):
    """execute called with an empty or spent plan."""


class DegenerateEndpoints(RelaxNavError):
    """Start and goal coincide; normalized metrics undefined."""


class SegmentationMismatch(RelaxNavError):
    """Region sets come from different segmentations."""


class NoFeasibleShortest(RelaxNavError):
    """No feasible shortest path exists for SPL normalization."""
