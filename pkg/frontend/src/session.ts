/** Drawing-session state machine for demonstration collection.
 *
 * Protocol: the expert draws a trajectory on the static map and submits
 * it; the tool injects a perturbation seeded on that trajectory; the
 * prefix up to the perturbed superpixel locks and the expert redraws the
 * remainder on the perturbed map. Both records go to the same store the
 * training pipeline reads.
 */

import { ApiClient, DemoRecord, MapMeta } from "./api.js";
import {
  Pt,
  decodeLabels,
  firstChangedIndex,
  polylineTraversable,
  snapPoint,
} from "./geometry.js";

export type Phase = "draw" | "perturbed-redraw" | "done";

export class CanvasSession {
  meta: MapMeta;
  labels: Uint8Array;
  points: Pt[] = [];
  lockedPrefix: Pt[] = [];
  phase: Phase = "draw";
  scenarioId: string;
  perturbedMapId: string | null = null;
  private undoStack: Pt[][] = [];

  constructor(private api: ApiClient, meta: MapMeta, scenarioId: string) {
    this.meta = meta;
    this.labels = decodeLabels(meta);
    this.scenarioId = scenarioId;
  }

  get polyline(): Pt[] {
    return [...this.lockedPrefix, ...this.points];
  }

  /** Snap and append a pointer position; hard cells are refused. */
  addPoint(raw: Pt): boolean {
    const snapped = snapPoint(this.meta, this.labels, raw);
    if (snapped === null) return false;
    const last = this.polyline[this.polyline.length - 1];
    if (last && last[0] === snapped[0] && last[1] === snapped[1]) {
      return false; // ignore duplicate clicks on the same cell
    }
    this.undoStack.push([...this.points]);
    this.points.push(snapped);
    return true;
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (prev === undefined) return false;
    this.points = prev;
    return true;
  }

  clear(): void {
    this.undoStack.push([...this.points]);
    this.points = [];
  }

  /** Client-side validation: the full stroke must stay traversable and
   * have at least two vertices. Runs before any POST. */
  validate(): string | null {
    const poly = this.polyline;
    if (poly.length < 2) return "draw at least two points";
    if (!polylineTraversable(this.meta, this.labels, poly)) {
      return "stroke crosses a hard region";
    }
    return null;
  }

  /** Submit the current stroke as a demonstration. */
  async submit(): Promise<number> {
    const problem = this.validate();
    if (problem !== null) throw new Error(problem);
    const record: DemoRecord = {
      scenario_id: this.phase === "perturbed-redraw"
        ? `${this.scenarioId}p` : this.scenarioId,
      source: "human",
      polyline: this.polyline,
    };
    if (this.phase === "perturbed-redraw") record.perturbation_index = 0;
    const { index } = await this.api.postDemo(record);
    if (this.phase === "perturbed-redraw") this.phase = "done";
    return index;
  }

  /** Inject a perturbation seeded on the drawn trajectory, lock the
   * prefix up to the perturbed superpixel, and switch to redraw mode.
   * Returns the perturbed map id. */
  async perturbAndRedraw(radius = 1): Promise<string> {
    if (this.phase !== "draw" || this.points.length < 3) {
      throw new Error("draw and submit a full trajectory first");
    }
    const seed = this.points[Math.floor(this.points.length / 2)];
    const { map_id } = await this.api.perturb(this.meta.id, seed, radius);
    const newMeta = await this.api.mapMeta(map_id);
    const newLabels = decodeLabels(newMeta);
    const cut = firstChangedIndex(this.meta, this.labels, newLabels,
                                  this.points);
    if (cut < 0) throw new Error("perturbation missed the trajectory");
    if (cut === 0) throw new Error("no prefix to lock before the blockage");
    // reuse the prefix bit-identically; redraw starts at its last vertex
    this.lockedPrefix = this.points.slice(0, cut);
    this.points = [];
    this.undoStack = [];
    this.meta = newMeta;
    this.labels = newLabels;
    this.perturbedMapId = map_id;
    this.phase = "perturbed-redraw";
    return map_id;
  }
}
