import { describe, expect, it } from "vitest";

import type { MapMeta } from "../src/api.js";
import {
  cellOf,
  decodeLabels,
  firstChangedIndex,
  pathLength,
  polylineTraversable,
  resamplePolyline,
  snapPoint,
  makeTransform,
} from "../src/geometry.js";

function meta4x4(rle: [number, number][]): MapMeta {
  return {
    id: "m",
    width: 4,
    height: 4,
    resolution: 1.0,
    labels: [
      { index: 0, name: "sidewalk", region_class: 0 },
      { index: 1, name: "grass", region_class: 1 },
      { index: 2, name: "building", region_class: 2 },
    ],
    labels_rle: rle,
  };
}

describe("decodeLabels", () => {
  it("expands runs to the full raster", () => {
    const meta = meta4x4([[0, 8], [2, 4], [1, 4]]);
    const labels = decodeLabels(meta);
    expect(labels.length).toBe(16);
    expect(labels[0]).toBe(0);
    expect(labels[8]).toBe(2);
    expect(labels[12]).toBe(1);
  });

  it("rejects undersized encodings", () => {
    const meta = meta4x4([[0, 3]]);
    expect(() => decodeLabels(meta)).toThrow();
  });
});

describe("cell lookup and snapping", () => {
  const meta = meta4x4([[0, 8], [2, 4], [1, 4]]);
  const labels = decodeLabels(meta);

  it("maps meters to row/col", () => {
    expect(cellOf(meta, [0.5, 0.5])).toEqual([0, 0]);
    expect(cellOf(meta, [3.9, 2.1])).toEqual([2, 3]);
    expect(cellOf(meta, [4.5, 1.0])).toBeNull();
  });

  it("snaps to cell centers on traversable cells", () => {
    expect(snapPoint(meta, labels, [0.2, 0.9])).toEqual([0.5, 0.5]);
    expect(snapPoint(meta, labels, [1.7, 3.2])).toEqual([1.5, 3.5]); // grass
  });

  it("refuses hard cells and out-of-bounds points", () => {
    expect(snapPoint(meta, labels, [0.5, 2.5])).toBeNull(); // building row
    expect(snapPoint(meta, labels, [-1, 0])).toBeNull();
  });

  it("validates whole polylines", () => {
    const ok: [number, number][] = [[0.5, 0.5], [2.5, 1.5], [0.5, 3.5]];
    const bad: [number, number][] = [[0.5, 0.5], [1.5, 2.5]];
    expect(polylineTraversable(meta, labels, ok)).toBe(true);
    expect(polylineTraversable(meta, labels, bad)).toBe(false);
  });
});

describe("polyline utilities", () => {
  it("computes length", () => {
    expect(pathLength([[0, 0], [3, 4]])).toBeCloseTo(5, 12);
  });

  it("resamples with endpoint preservation", () => {
    const pts = resamplePolyline([[0, 0], [5, 0]], 1.0);
    expect(pts[0]).toEqual([0, 0]);
    expect(pts[pts.length - 1]).toEqual([5, 0]);
    for (let i = 1; i < pts.length; i++) {
      const step = Math.hypot(pts[i][0] - pts[i - 1][0],
                              pts[i][1] - pts[i - 1][1]);
      expect(step).toBeLessThanOrEqual(1.0 + 1e-9);
    }
  });

  it("finds the first vertex hit by a map change", () => {
    const meta = meta4x4([[0, 16]]);
    const before = decodeLabels(meta);
    const after = before.slice();
    after[1 * 4 + 2] = 2; // cell (1, 2) newly blocked
    const poly: [number, number][] = [[0.5, 0.5], [1.5, 1.5], [2.5, 1.5],
                                      [3.5, 1.5]];
    expect(firstChangedIndex(meta, before, after, poly)).toBe(2);
    expect(firstChangedIndex(meta, before, before, poly)).toBe(-1);
  });
});

describe("transforms", () => {
  it("round-trips pixel and map coordinates within half a cell", () => {
    const meta = meta4x4([[0, 16]]);
    const t = makeTransform(meta, 512);
    const p: [number, number] = [1.25, 3.75];
    const back = t.toMap(t.toPx(p));
    expect(Math.abs(back[0] - p[0])).toBeLessThan(meta.resolution / 2);
    expect(Math.abs(back[1] - p[1])).toBeLessThan(meta.resolution / 2);
  });
});
