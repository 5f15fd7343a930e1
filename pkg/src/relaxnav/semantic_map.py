"""Semantic raster maps with free/soft/hard region classes.

A SemanticGrid is an immutable row-major raster of label indices plus a
label table mapping each index to a name and a region class. Maps persist
in the binary SMAP v1 format; scenarios and risk tables are JSON documents
so they stay hand-editable.

SMAP v1 layout (little-endian):
    magic "SMAP" | u32 width | u32 height | f32 resolution | u8 M
    M x (u8 name_len | name utf-8 | u8 class_code)   class: 0 free, 1 soft, 2 hard
    width*height label bytes (row-major)
"""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FormatError,
    Infeasible,
    OutOfBounds,
    SeedOnHardRegion,
    SeedOutOfBounds,
)

MAGIC = b"SMAP"

DEFAULT_RESOLUTION = 0.5  # meters per cell
DEFAULT_D_MIN = 30.0
DEFAULT_D_MAX = 200.0


class RegionClass(enum.IntEnum):
    """Traversability class of a label. Hard cells are never traversable."""

    FREE = 0
    SOFT = 1
    HARD = 2


@dataclass(frozen=True)
class SemanticGrid:
    """Immutable labeled raster. Mutating operations return new grids."""

    width: int
    height: int
    resolution: float
    labels: np.ndarray  # (height, width) uint8, row-major
    label_table: tuple  # ((name, RegionClass), ...) with len M <= 255

    def __post_init__(self):
        if self.resolution <= 0:
            raise FormatError("resolution must be positive")
        m = len(self.label_table)
        if m == 0 or m > 255:
            raise FormatError(f"label table size {m} out of range 1..255")
        lab = np.asarray(self.labels, dtype=np.uint8)
        if lab.shape != (self.height, self.width):
            raise FormatError(
                f"labels shape {lab.shape} != ({self.height}, {self.width})")
        if lab.size and int(lab.max()) >= m:
            raise FormatError("label index out of range of label table")
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "label_table", tuple(
            (str(n), RegionClass(c)) for n, c in self.label_table))
        lab_lock = self.labels
        lab_lock.setflags(write=False)
        classes = np.array([c for _, c in self.label_table], dtype=np.uint8)
        object.__setattr__(self, "_classes", classes)

    # -- derived views ----------------------------------------------------

    @property
    def n_labels(self) -> int:
        return len(self.label_table)

    def class_map(self) -> np.ndarray:
        """(height, width) array of RegionClass codes."""
        return self._classes[self.labels]

    def traversable_mask(self) -> np.ndarray:
        """Boolean mask of cells that are free or soft."""
        return self.class_map() != RegionClass.HARD

    def label_index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.label_table):
            if n == name:
                return i
        raise KeyError(name)

    def label_name(self, index: int) -> str:
        return self.label_table[index][0]

    # -- geometry ----------------------------------------------------------

    def cell_of(self, point) -> tuple:
        """(row, col) of a point in meters; raises OutOfBounds."""
        x, y = float(point[0]), float(point[1])
        col = int(math.floor(x / self.resolution))
        row = int(math.floor(y / self.resolution))
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise OutOfBounds(f"point ({x}, {y}) outside map")
        return row, col

    def cell_center(self, row: int, col: int) -> tuple:
        return ((col + 0.5) * self.resolution, (row + 0.5) * self.resolution)

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    def with_labels(self, labels: np.ndarray) -> "SemanticGrid":
        return SemanticGrid(self.width, self.height, self.resolution,
                            labels.copy(), self.label_table)


def region_class_of(grid: SemanticGrid, cell) -> RegionClass:
    """Region class of a (row, col) cell."""
    row, col = int(cell[0]), int(cell[1])
    if not grid.in_bounds(row, col):
        raise OutOfBounds(f"cell {cell} outside {grid.height}x{grid.width}")
    return RegionClass(grid._classes[grid.labels[row, col]])


@dataclass(frozen=True)
class Perturbation:
    """Relabel the superpixel at seed_position plus all superpixels within
    `radius` adjacency hops."""

    seed_position: tuple  # (x, y) meters
    radius: int  # superpixel hops, >= 0
    new_label: int  # label index whose class is hard or soft

    def to_json(self) -> dict:
        return {"seed_position": list(self.seed_position),
                "radius": self.radius, "new_label": self.new_label}

    @staticmethod
    def from_json(d: dict) -> "Perturbation":
        return Perturbation(tuple(d["seed_position"]), int(d["radius"]),
                            int(d["new_label"]))


@dataclass(frozen=True)
class Scenario:
    """A start/goal task on a map, with optional mid-run perturbations."""

    map_id: str
    start: tuple  # (x, y) meters, on a free cell
    goal: tuple
    perturbations: tuple = ()
    risk_table: dict = field(default_factory=dict)  # label name -> [0, 1]
    scenario_id: str = ""

    def to_json(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "map_id": self.map_id,
            "start": list(self.start),
            "goal": list(self.goal),
            "perturbations": [p.to_json() for p in self.perturbations],
            "risk_table": dict(self.risk_table),
        }

    @staticmethod
    def from_json(d: dict) -> "Scenario":
        return Scenario(
            map_id=d["map_id"],
            start=tuple(d["start"]),
            goal=tuple(d["goal"]),
            perturbations=tuple(Perturbation.from_json(p)
                                for p in d.get("perturbations", [])),
            risk_table=dict(d.get("risk_table", {})),
            scenario_id=d.get("scenario_id", ""),
        )


def save_scenarios(scenarios, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump([s.to_json() for s in scenarios], f, indent=2)


def load_scenarios(path) -> list:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if isinstance(doc, dict):
        doc = [doc]
    return [Scenario.from_json(d) for d in doc]


def load_risk_table(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        table = json.load(f)
    for name, risk in table.items():
        if not (0.0 <= float(risk) <= 1.0):
            raise FormatError(f"risk for {name!r} outside [0, 1]")
    return {str(k): float(v) for k, v in table.items()}


def save_risk_table(table: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(table, f, indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# SMAP binary io
# --------------------------------------------------------------------------


def save_map(grid: SemanticGrid, path) -> None:
    """Write SMAP v1; the file round-trips bit-identically through load_map."""
    parts = [MAGIC, struct.pack("<IIfB", grid.width, grid.height,
                                grid.resolution, grid.n_labels)]
    for name, cls in grid.label_table:
        raw = name.encode("utf-8")
        if len(raw) > 255:
            raise FormatError(f"label name too long: {name!r}")
        parts.append(struct.pack("<B", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", int(cls)))
    parts.append(grid.labels.tobytes())
    blob = b"".join(parts)
    with open(path, "wb") as f:
        f.write(blob)


def load_map(path) -> SemanticGrid:
    """Read and validate an SMAP v1 file."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise FormatError("bad magic, not an SMAP file")
    off = 4
    try:
        width, height, resolution, m = struct.unpack_from("<IIfB", blob, off)
    except struct.error as e:
        raise FormatError("truncated header") from e
    off += struct.calcsize("<IIfB")
    if m == 0:
        raise FormatError("empty label table (M=0)")
    table = []
    for _ in range(m):
        if off >= len(blob):
            raise FormatError("truncated label table")
        (nlen,) = struct.unpack_from("<B", blob, off)
        off += 1
        if off + nlen + 1 > len(blob):
            raise FormatError("truncated label table entry")
        name = blob[off:off + nlen].decode("utf-8")
        off += nlen
        (code,) = struct.unpack_from("<B", blob, off)
        off += 1
        if code > 2:
            raise FormatError(f"unknown region class code {code}")
        table.append((name, RegionClass(code)))
    n = width * height
    payload = blob[off:off + n]
    if len(payload) != n:
        raise FormatError(f"payload has {len(payload)} bytes, expected {n}")
    labels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    if labels.size and int(labels.max()) >= m:
        raise FormatError("label index >= M in payload")
    return SemanticGrid(width, height, float(resolution), labels.copy(),
                        tuple(table))


# --------------------------------------------------------------------------
# perturbation and scenario sampling
# --------------------------------------------------------------------------


def apply_perturbation(grid: SemanticGrid, segmentation, p: Perturbation) -> SemanticGrid:
    """Relabel the seed superpixel and everything within `radius` hops.

    Hops follow 4-neighbor region adjacency of the segmentation, not the
    (possibly thresholded) planning graph. Cells outside the selected
    superpixels are untouched.
    """
    name, cls = grid.label_table[p.new_label]
    if cls == RegionClass.FREE:
        raise FormatError(
            f"perturbation label {name!r} must be hard or soft")
    try:
        row, col = grid.cell_of(p.seed_position)
    except OutOfBounds as e:
        raise SeedOutOfBounds(str(e)) from e
    seed_region = segmentation.assignment[row, col]
    if seed_region < 0:
        raise SeedOnHardRegion(
            f"seed {p.seed_position} lies on a hard cell")
    selected = segmentation.regions_within_hops(int(seed_region), p.radius)
    labels = grid.labels.copy()
    for rid in selected:
        rr, cc = segmentation.region_cells[rid]
        labels[rr, cc] = p.new_label
    return grid.with_labels(labels)


def sample_scenarios(grid: SemanticGrid, n: int, d_min: float = DEFAULT_D_MIN,
                     d_max: float = DEFAULT_D_MAX, rng_seed: int = 0,
                     map_id: str = "map", retry_budget: int = 10_000) -> list:
    """Sample n start/goal pairs on free cells with admissible spacing.

    Pure function of (grid, parameters, rng_seed).
    """
    classes = grid.class_map()
    free_rows, free_cols = np.nonzero(classes == RegionClass.FREE)
    if free_rows.size < 2:
        raise Infeasible("map has fewer than two free cells")
    rng = np.random.default_rng(rng_seed)
    res = grid.resolution
    out = []
    tries = 0
    while len(out) < n:
        if tries >= retry_budget:
            raise Infeasible(
                f"no admissible pair within {retry_budget} draws")
        tries += 1
        i, j = rng.integers(0, free_rows.size, size=2)
        sx = (free_cols[i] + 0.5) * res
        sy = (free_rows[i] + 0.5) * res
        gx = (free_cols[j] + 0.5) * res
        gy = (free_rows[j] + 0.5) * res
        d = math.hypot(gx - sx, gy - sy)
        if d_min <= d <= d_max:
            out.append(Scenario(map_id=map_id, start=(sx, sy), goal=(gx, gy),
                                scenario_id=f"{map_id}-s{len(out):03d}"))
    return out
