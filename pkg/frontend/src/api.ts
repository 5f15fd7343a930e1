/** Typed client for the /v1 navigation service. All coordinates are map
 * meters; the UI holds no business logic beyond geometry and rendering. */

export interface LabelEntry {
  index: number;
  name: string;
  region_class: number; // 0 free, 1 soft, 2 hard
}

export interface MapMeta {
  id: string;
  width: number;
  height: number;
  resolution: number;
  labels: LabelEntry[];
  labels_rle?: [number, number][];
}

export interface GraphNode {
  id: number;
  centroid: [number, number];
  label: number;
  is_start: boolean;
  is_goal: boolean;
  region_class: number;
}

export interface GraphDoc {
  nodes: GraphNode[];
  edges: [number, number, number][];
  segmentation: { n_regions: number; assignment_rows: number[][] };
}

export interface PlanDoc {
  success: boolean;
  graph_path: number[];
  relaxed_regions: number[];
  polyline: [number, number][];
}

export interface CostFieldRegion {
  id: number;
  psi: number;
  centroid: [number, number];
  label: number;
  region_class: number;
}

export interface EpisodeDoc {
  scenario_id: string;
  planner: string;
  trajectory: [number, number][];
  relax_cells: number[];
  reached: boolean;
  success: boolean;
  steps: { t: number; agent_pos: [number, number]; relaxed: number[] }[];
}

export interface DemoRecord {
  scenario_id: string;
  source: string;
  polyline: [number, number][];
  perturbation_index?: number;
  index?: number;
}

async function getJson<T>(url: string): Promise<T> {
  const resp = await fetch(url);
  if (!resp.ok) throw new Error(`${url}: HTTP ${resp.status}`);
  return (await resp.json()) as T;
}

async function postJson<T>(url: string, body: unknown): Promise<T> {
  const resp = await fetch(url, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!resp.ok) throw new Error(`${url}: HTTP ${resp.status}`);
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  listMaps(): Promise<MapMeta[]> {
    return getJson(`${this.base}/v1/maps`);
  }

  mapMeta(id: string): Promise<MapMeta> {
    return getJson(`${this.base}/v1/maps/${id}`);
  }

  rasterUrl(id: string): string {
    return `${this.base}/v1/maps/${id}/raster`;
  }

  graph(id: string): Promise<GraphDoc> {
    return getJson(`${this.base}/v1/maps/${id}/graph`);
  }

  perturb(id: string, seedXy: [number, number], radius = 1):
      Promise<{ map_id: string }> {
    return postJson(`${this.base}/v1/maps/${id}/perturb`,
                    { seed_xy: seedXy, radius });
  }

  costField(id: string, model: string): Promise<{ regions: CostFieldRegion[] }> {
    return getJson(`${this.base}/v1/maps/${id}/costfield?model=${model}`);
  }

  plan(id: string, start: [number, number], goal: [number, number],
       model?: string): Promise<PlanDoc> {
    const m = model ? `&model=${model}` : "";
    return getJson(`${this.base}/v1/plan?map=${id}&sx=${start[0]}&sy=${start[1]}`
                   + `&gx=${goal[0]}&gy=${goal[1]}${m}`);
  }

  postDemo(demo: DemoRecord): Promise<{ index: number }> {
    return postJson(`${this.base}/v1/demos`, demo);
  }

  listDemos(): Promise<DemoRecord[]> {
    return getJson(`${this.base}/v1/demos`);
  }

  episode(id: string): Promise<EpisodeDoc> {
    return getJson(`${this.base}/v1/episodes/${id}`);
  }
}
