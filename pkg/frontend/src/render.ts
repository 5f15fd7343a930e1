/** Canvas layers: label raster, superpixel boundaries, cost heatmap,
 * plan/stroke polylines, episode replay. */

import type { CostFieldRegion, GraphDoc, MapMeta } from "./api.js";
import { Pt, makeTransform } from "./geometry.js";

// palette mirrors the service renderer so both views read the same
const LABEL_COLORS: Record<string, string> = {
  sidewalk: "#ece9d8",
  grass: "#7ab55c",
  road: "#808084",
  living_street: "#969696",
  parking: "#b0b0b0",
  crosswalk: "#f5c484",
  rough: "#bea878",
  building: "#e8863a",
  water: "#5880e4",
  blocked: "#c44040",
};

const CLASS_FALLBACK = ["#e6e6dc", "#aabe8c", "#5a5a5a"];

export function labelColor(meta: MapMeta, label: number): string {
  const entry = meta.labels[label];
  return LABEL_COLORS[entry.name] ?? CLASS_FALLBACK[entry.region_class];
}

export function drawRaster(ctx: CanvasRenderingContext2D, meta: MapMeta,
                           labels: Uint8Array, pxWidth: number): void {
  const t = makeTransform(meta, pxWidth);
  const cell = meta.resolution * t.scale;
  for (let r = 0; r < meta.height; r++) {
    for (let c = 0; c < meta.width; c++) {
      ctx.fillStyle = labelColor(meta, labels[r * meta.width + c]);
      ctx.fillRect(c * cell, r * cell, cell + 0.5, cell + 0.5);
    }
  }
}

export function drawBoundaries(ctx: CanvasRenderingContext2D, meta: MapMeta,
                               graph: GraphDoc, pxWidth: number): void {
  const t = makeTransform(meta, pxWidth);
  const cell = meta.resolution * t.scale;
  const rows = graph.segmentation.assignment_rows;
  ctx.strokeStyle = "rgba(40,40,40,0.35)";
  ctx.lineWidth = 1;
  ctx.beginPath();
  for (let r = 0; r < meta.height; r++) {
    for (let c = 0; c < meta.width; c++) {
      const id = rows[r][c];
      if (c + 1 < meta.width && rows[r][c + 1] !== id) {
        ctx.moveTo((c + 1) * cell, r * cell);
        ctx.lineTo((c + 1) * cell, (r + 1) * cell);
      }
      if (r + 1 < meta.height && rows[r + 1][c] !== id) {
        ctx.moveTo(c * cell, (r + 1) * cell);
        ctx.lineTo((c + 1) * cell, (r + 1) * cell);
      }
    }
  }
  ctx.stroke();
}

/** Brightness encodes cost: brighter means cheaper to relax. Free regions
 * render in a distinct neutral tone (their cost is pinned to zero). */
export function heatmapColor(psi: number, maxPsi: number,
                             regionClass: number): string {
  if (regionClass === 0) return "rgba(235, 235, 225, 0.75)";
  const rel = maxPsi > 0 ? Math.min(psi / maxPsi, 1) : 0;
  const bright = Math.round(235 - 175 * rel);
  return `rgba(${bright}, ${Math.round(bright * 0.55)}, 60, 0.75)`;
}

export function drawCostField(ctx: CanvasRenderingContext2D, meta: MapMeta,
                              graph: GraphDoc, field: CostFieldRegion[],
                              pxWidth: number): void {
  const t = makeTransform(meta, pxWidth);
  const cell = meta.resolution * t.scale;
  const byId = new Map(field.map((r) => [r.id, r]));
  const soft = field.filter((r) => r.region_class === 1);
  const maxPsi = soft.length ? Math.max(...soft.map((r) => r.psi)) : 0;
  const rows = graph.segmentation.assignment_rows;
  for (let r = 0; r < meta.height; r++) {
    for (let c = 0; c < meta.width; c++) {
      const region = byId.get(rows[r][c]);
      if (!region) continue;
      ctx.fillStyle = heatmapColor(region.psi, maxPsi, region.region_class);
      ctx.fillRect(c * cell, r * cell, cell + 0.5, cell + 0.5);
    }
  }
}

export function drawPolyline(ctx: CanvasRenderingContext2D, meta: MapMeta,
                             poly: Pt[], pxWidth: number, color: string,
                             width = 2): void {
  if (poly.length < 2) return;
  const t = makeTransform(meta, pxWidth);
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.beginPath();
  const [x0, y0] = t.toPx(poly[0]);
  ctx.moveTo(x0, y0);
  for (const p of poly.slice(1)) {
    const [x, y] = t.toPx(p);
    ctx.lineTo(x, y);
  }
  ctx.stroke();
}

export function drawMarker(ctx: CanvasRenderingContext2D, meta: MapMeta,
                           p: Pt, pxWidth: number, color: string): void {
  const t = makeTransform(meta, pxWidth);
  const [x, y] = t.toPx(p);
  ctx.fillStyle = color;
  ctx.beginPath();
  ctx.arc(x, y, 5, 0, 2 * Math.PI);
  ctx.fill();
}

/** Step an episode replay; returns the prefix of the trajectory to show. */
export function replayFrame(trajectory: Pt[], frame: number): Pt[] {
  return trajectory.slice(0, Math.max(2, Math.min(frame, trajectory.length)));
}
