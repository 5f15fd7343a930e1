import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";

function stubFetch(payload: unknown, ok = true, status = 200) {
  const fn = vi.fn(async () => ({
    ok,
    status,
    json: async () => payload,
  })) as unknown as typeof fetch;
  vi.stubGlobal("fetch", fn);
  return fn as unknown as ReturnType<typeof vi.fn>;
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("ApiClient", () => {
  it("hits the versioned endpoints", async () => {
    const fn = stubFetch([]);
    const api = new ApiClient("");
    await api.listMaps();
    expect(fn.mock.calls[0][0]).toBe("/v1/maps");
    await api.graph("w");
    expect(fn.mock.calls[1][0]).toBe("/v1/maps/w/graph");
    await api.costField("w", "m");
    expect(fn.mock.calls[2][0]).toBe("/v1/maps/w/costfield?model=m");
    await api.episode("e1");
    expect(fn.mock.calls[3][0]).toBe("/v1/episodes/e1");
  });

  it("posts demonstrations as JSON in meters", async () => {
    const fn = stubFetch({ index: 3 });
    const api = new ApiClient("");
    const record = {
      scenario_id: "s0",
      source: "human",
      polyline: [[0.5, 0.5], [1.5, 2.5]] as [number, number][],
    };
    const out = await api.postDemo(record);
    expect(out.index).toBe(3);
    const [url, init] = fn.mock.calls[0];
    expect(url).toBe("/v1/demos");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body)).toEqual(record);
  });

  it("encodes plan queries with coordinates", async () => {
    const fn = stubFetch({ success: true, graph_path: [], relaxed_regions: [],
                           polyline: [] });
    const api = new ApiClient("http://host");
    await api.plan("w", [1.5, 2.5], [9.5, 8.5], "m");
    expect(fn.mock.calls[0][0]).toBe(
      "http://host/v1/plan?map=w&sx=1.5&sy=2.5&gx=9.5&gy=8.5&model=m");
  });

  it("raises on HTTP errors", async () => {
    stubFetch({}, false, 404);
    const api = new ApiClient("");
    await expect(api.mapMeta("nope")).rejects.toThrow(/404/);
  });
});
