/** Map geometry: cell lookup, stroke snapping, polyline utilities.
 * Everything works in map meters; cells are row-major with the origin at
 * the top-left corner, matching the service. */

import type { MapMeta } from "./api.js";

export const HARD = 2;

export type Pt = [number, number];

/** Decode the run-length encoded per-cell label array from the map meta. */
export function decodeLabels(meta: MapMeta): Uint8Array {
  const out = new Uint8Array(meta.width * meta.height);
  if (!meta.labels_rle) throw new Error("map meta has no labels_rle");
  let i = 0;
  for (const [value, run] of meta.labels_rle) {
    out.fill(value, i, i + run);
    i += run;
  }
  if (i !== out.length) throw new Error("labels_rle does not cover the map");
  return out;
}

export function cellOf(meta: MapMeta, p: Pt): [number, number] | null {
  const col = Math.floor(p[0] / meta.resolution);
  const row = Math.floor(p[1] / meta.resolution);
  if (row < 0 || row >= meta.height || col < 0 || col >= meta.width) {
    return null;
  }
  return [row, col];
}

export function cellCenter(meta: MapMeta, row: number, col: number): Pt {
  return [(col + 0.5) * meta.resolution, (row + 0.5) * meta.resolution];
}

export function regionClassAt(meta: MapMeta, labels: Uint8Array,
                              p: Pt): number | null {
  const cell = cellOf(meta, p);
  if (cell === null) return null;
  const label = labels[cell[0] * meta.width + cell[1]];
  return meta.labels[label].region_class;
}

/** Snap a pointer position to the center of its cell; null when the cell
 * is hard or out of bounds (drawn points must stay traversable). */
export function snapPoint(meta: MapMeta, labels: Uint8Array,
                          p: Pt): Pt | null {
  const cell = cellOf(meta, p);
  if (cell === null) return null;
  const label = labels[cell[0] * meta.width + cell[1]];
  if (meta.labels[label].region_class === HARD) return null;
  return cellCenter(meta, cell[0], cell[1]);
}

/** True when every vertex lies on a traversable cell. */
export function polylineTraversable(meta: MapMeta, labels: Uint8Array,
                                    poly: Pt[]): boolean {
  return poly.every((p) => {
    const cls = regionClassAt(meta, labels, p);
    return cls !== null && cls !== HARD;
  });
}

export function pathLength(poly: Pt[]): number {
  let total = 0;
  for (let i = 1; i < poly.length; i++) {
    total += Math.hypot(poly[i][0] - poly[i - 1][0],
                        poly[i][1] - poly[i - 1][1]);
  }
  return total;
}

/** Points along the polyline every `spacing` meters, endpoints included. */
export function resamplePolyline(poly: Pt[], spacing: number): Pt[] {
  if (poly.length < 2) return poly.slice();
  const out: Pt[] = [poly[0]];
  let carry = 0;
  for (let i = 1; i < poly.length; i++) {
    const [x0, y0] = poly[i - 1];
    const [x1, y1] = poly[i];
    const segLen = Math.hypot(x1 - x0, y1 - y0);
    if (segLen === 0) continue;
    let d = spacing - carry;
    while (d <= segLen) {
      const f = d / segLen;
      out.push([x0 + f * (x1 - x0), y0 + f * (y1 - y0)]);
      d += spacing;
    }
    carry = segLen - (d - spacing);
  }
  const last = poly[poly.length - 1];
  const tail = out[out.length - 1];
  if (tail[0] !== last[0] || tail[1] !== last[1]) out.push(last);
  return out;
}

/** Index of the first vertex whose cell changed between two label arrays
 * (where the injected perturbation swallowed the route), or -1. */
export function firstChangedIndex(meta: MapMeta, before: Uint8Array,
                                  after: Uint8Array, poly: Pt[]): number {
  for (let i = 0; i < poly.length; i++) {
    const cell = cellOf(meta, poly[i]);
    if (cell === null) continue;
    const flat = cell[0] * meta.width + cell[1];
    if (before[flat] !== after[flat]) return i;
  }
  return -1;
}

/** Screen-space transform helpers for a canvas of size w x h pixels. */
export function makeTransform(meta: MapMeta, pxWidth: number) {
  const scale = pxWidth / (meta.width * meta.resolution);
  return {
    scale,
    toPx(p: Pt): Pt {
      return [p[0] * scale, p[1] * scale];
    },
    toMap(px: Pt): Pt {
      return [px[0] / scale, px[1] / scale];
    },
  };
}
