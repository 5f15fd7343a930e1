import { describe, expect, it } from "vitest";

import type { MapMeta } from "../src/api.js";
import { heatmapColor, labelColor, replayFrame } from "../src/render.js";

const meta: MapMeta = {
  id: "m",
  width: 2,
  height: 2,
  resolution: 1,
  labels: [
    { index: 0, name: "sidewalk", region_class: 0 },
    { index: 1, name: "grass", region_class: 1 },
    { index: 2, name: "mystery", region_class: 2 },
  ],
};

describe("palette", () => {
  it("uses the fixed colors for known labels", () => {
    expect(labelColor(meta, 0)).toBe("#ece9d8");
    expect(labelColor(meta, 1)).toBe("#7ab55c");
  });

  it("falls back by region class for unknown labels", () => {
    expect(labelColor(meta, 2)).toBe("#5a5a5a");
  });
});

describe("cost heatmap", () => {
  it("renders free regions in the distinct zero-cost tone", () => {
    expect(heatmapColor(0, 5, 0)).toBe("rgba(235, 235, 225, 0.75)");
  });

  it("is brighter for cheaper soft regions", () => {
    const cheap = heatmapColor(0.5, 5, 1);
    const costly = heatmapColor(5, 5, 1);
    const red = (c: string) => parseInt(c.match(/rgba\((\d+)/)![1], 10);
    expect(red(cheap)).toBeGreaterThan(red(costly));
  });
});

describe("episode replay", () => {
  const traj: [number, number][] = [[0, 0], [1, 0], [2, 0], [3, 0]];

  it("grows the shown prefix with the frame counter", () => {
    expect(replayFrame(traj, 2).length).toBe(2);
    expect(replayFrame(traj, 3).length).toBe(3);
  });

  it("clamps to the trajectory bounds", () => {
    expect(replayFrame(traj, 0).length).toBe(2);
    expect(replayFrame(traj, 99)).toEqual(traj);
  });
});
