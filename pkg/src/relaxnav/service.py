"""HTTP service the demonstration-collection UI drives.

All endpoints live under /v1 and exchange JSON with coordinates in
meters; map rasters are 8-bit indexed PNGs. The service is stateless
beyond its data directory:

    data_dir/
      maps/<id>.smap          semantic maps
      models/<name>.relax.bin trained estimators
      demos/demos.jsonl       append-only demonstration store
      episodes/<id>.episode.json

The demonstration store is shared with the CLI (identical serializers).
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from .errors import RelaxNavError
from .gnn import load_model
from .render import png_bytes, render_map
from .semantic_map import Perturbation, load_map, save_map
from .simulate import Granularity, plan_step
from .superpixel import (
    build_graph,
    default_target_n,
    graph_to_json,
    slic_segment,
)
from .training import Demonstration


class PerturbRequest(BaseModel):
    seed_xy: list
    radius: int = 1
    new_label: int | None = None


class DemoRequest(BaseModel):
    scenario_id: str
    polyline: list
    source: str = "human"
    perturbation_index: int | None = None


class ServiceState:
    def __init__(self, data_dir):
        self.root = Path(data_dir)
        for sub in ("maps", "models", "demos", "episodes"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self._grids = {}
        self._segs = {}
        self._models = {}
        self._demo_lock = threading.Lock()

    def map_ids(self):
        return sorted(p.stem for p in (self.root / "maps").glob("*.smap"))

    def grid(self, map_id: str):
        if map_id not in self._grids:
            path = self.root / "maps" / f"{map_id}.smap"
            if not path.exists():
                raise HTTPException(404, f"unknown map {map_id!r}")
            self._grids[map_id] = load_map(path)
        return self._grids[map_id]

    def seg(self, map_id: str):
        if map_id not in self._segs:
            grid = self.grid(map_id)
            self._segs[map_id] = slic_segment(grid, default_target_n(grid))
        return self._segs[map_id]

    def model(self, name: str):
        if name not in self._models:
            path = self.root / "models" / f"{name}.relax.bin"
            if not path.exists():
                raise HTTPException(404, f"unknown model {name!r}")
            self._models[name] = load_model(path)
        return self._models[name]

    def demos_path(self):
        return self.root / "demos" / "demos.jsonl"

    def append_demo(self, demo: Demonstration) -> int:
        with self._demo_lock:
            path = self.demos_path()
            idx = 0
            if path.exists():
                with open(path) as f:
                    idx = sum(1 for line in f if line.strip())
            with open(path, "a", encoding="utf-8") as f:
                f.write(json.dumps(demo.to_json()) + "\n")
        return idx

    def list_demos(self):
        path = self.demos_path()
        if not path.exists():
            return []
        out = []
        with open(path) as f:
            for i, line in enumerate(f):
                line = line.strip()
                if line:
                    d = json.loads(line)
                    d["index"] = i
                    out.append(d)
        return out


def _rle(flat) -> list:
    runs = []
    i = 0
    n = len(flat)
    while i < n:
        v = int(flat[i])
        j = i
        while j < n and flat[j] == v:
            j += 1
        runs.append([v, j - i])
        i = j
    return runs


def _map_meta(map_id: str, grid, with_cells: bool = False) -> dict:
    doc = {
        "id": map_id,
        "width": grid.width,
        "height": grid.height,
        "resolution": grid.resolution,
        "labels": [{"index": i, "name": name, "region_class": int(cls)}
                   for i, (name, cls) in enumerate(grid.label_table)],
    }
    if with_cells:
        doc["labels_rle"] = _rle(grid.labels.ravel())
    return doc


def create_app(data_dir) -> FastAPI:
    app = FastAPI(title="relaxnav service", version="1")
    state = ServiceState(data_dir)
    app.state.store = state

    @app.exception_handler(RelaxNavError)
    async def _domain_error(request, exc):
        return JSONResponse(status_code=422, content={
            "error": type(exc).__name__, "message": str(exc)})

    @app.get("/v1/maps")
    def list_maps():
        return [_map_meta(mid, state.grid(mid)) for mid in state.map_ids()]

    @app.get("/v1/maps/{map_id}")
    def map_meta(map_id: str):
        # per-cell labels ride along (run-length encoded) so the UI can
        # snap and validate strokes without a second request
        return _map_meta(map_id, state.grid(map_id), with_cells=True)

    @app.get("/v1/maps/{map_id}/raster")
    def map_raster(map_id: str):
        img = render_map(state.grid(map_id))
        return Response(content=png_bytes(img), media_type="image/png")

    @app.get("/v1/maps/{map_id}/graph")
    def map_graph(map_id: str):
        grid = state.grid(map_id)
        seg = state.seg(map_id)
        free = np.nonzero(grid.class_map() == 0)
        res = grid.resolution
        start = ((free[1][0] + 0.5) * res, (free[0][0] + 0.5) * res)
        goal = ((free[1][-1] + 0.5) * res, (free[0][-1] + 0.5) * res)
        doc = graph_to_json(build_graph(grid, seg, start, goal))
        doc["segmentation"] = {
            "n_regions": seg.n_regions,
            "assignment_rows": [row.tolist() for row in seg.assignment],
        }
        return doc

    @app.post("/v1/maps/{map_id}/perturb")
    def map_perturb(map_id: str, req: PerturbRequest):
        grid = state.grid(map_id)
        seg = state.seg(map_id)
        new_label = req.new_label
        if new_label is None:
            hard = [i for i, (name, cls) in enumerate(grid.label_table)
                    if int(cls) == 2 and name == "blocked"]
            if not hard:
                hard = [i for i, (_, cls) in enumerate(grid.label_table)
                        if int(cls) == 2]
            new_label = hard[0]
        from .semantic_map import apply_perturbation

        p = Perturbation(seed_position=tuple(req.seed_xy), radius=req.radius,
                         new_label=new_label)
        perturbed = apply_perturbation(grid, seg, p)
        existing = state.map_ids()
        k = 0
        while f"{map_id}-p{k}" in existing:
            k += 1
        new_id = f"{map_id}-p{k}"
        save_map(perturbed, state.root / "maps" / f"{new_id}.smap")
        return {"map_id": new_id}

    @app.get("/v1/maps/{map_id}/costfield")
    def cost_field(map_id: str, model: str):
        grid = state.grid(map_id)
        seg = state.seg(map_id)
        mdl = state.model(model)
        free = np.nonzero(grid.class_map() == 0)
        res = grid.resolution
        start = ((free[1][0] + 0.5) * res, (free[0][0] + 0.5) * res)
        goal = ((free[1][-1] + 0.5) * res, (free[0][-1] + 0.5) * res)
        graph = build_graph(grid, seg, start, goal)
        psi = mdl.forward(graph).data
        return {"regions": [
            {"id": n.id, "psi": float(psi[n.id]),
             "centroid": [n.centroid[0], n.centroid[1]],
             "label": n.label, "region_class": int(n.region_class)}
            for n in graph.nodes]}

    @app.post("/v1/demos")
    def post_demo(req: DemoRequest):
        if len(req.polyline) < 2:
            raise HTTPException(422, "polyline needs at least two points")
        demo = Demonstration(
            scenario_id=req.scenario_id,
            polyline=[tuple(p) for p in req.polyline],
            source=req.source,
            perturbation_index=req.perturbation_index)
        idx = state.append_demo(demo)
        return {"index": idx}

    @app.get("/v1/demos")
    def get_demos():
        return state.list_demos()

    @app.get("/v1/plan")
    def get_plan(map: str, sx: float, sy: float, gx: float, gy: float,
                 model: str | None = None, granularity: str = "union"):
        grid = state.grid(map)
        mdl = state.model(model) if model else None
        plan, st = plan_step(None, grid, mdl, (sx, sy), (gx, gy),
                             granularity=Granularity(granularity))
        return {
            "success": plan.success,
            "graph_path": list(plan.graph_path),
            "relaxed_regions": sorted(plan.relaxed_set),
            "polyline": [[x, y] for (x, y) in plan.continuous_path],
        }

    @app.get("/v1/episodes/{episode_id}")
    def get_episode(episode_id: str):
        path = state.root / "episodes" / f"{episode_id}.episode.json"
        if not path.exists():
            raise HTTPException(404, f"unknown episode {episode_id!r}")
        with open(path) as f:
            return json.load(f)

    return app
