/** Single-page app wiring: map picker, draw/perturb/redraw workflow,
 * cost-field and episode-replay overlays. Serve the service on :8008 and
 * open index.html (same origin via the service or a static server with a
 * proxy). */

import { ApiClient } from "./api.js";
import { makeTransform, Pt } from "./geometry.js";
import {
  drawBoundaries,
  drawCostField,
  drawMarker,
  drawPolyline,
  drawRaster,
  replayFrame,
} from "./render.js";
import { CanvasSession } from "./session.js";

const PX_WIDTH = 768;

const api = new ApiClient("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const canvas = el<HTMLCanvasElement>("map-canvas");
  const ctx = canvas.getContext("2d")!;
  const status = el<HTMLSpanElement>("status");
  const mapSelect = el<HTMLSelectElement>("map-select");
  const modelInput = el<HTMLInputElement>("model-name");
  const episodeInput = el<HTMLInputElement>("episode-id");

  const maps = await api.listMaps();
  for (const m of maps) {
    const opt = document.createElement("option");
    opt.value = m.id;
    opt.textContent = m.id;
    mapSelect.appendChild(opt);
  }

  let session: CanvasSession | null = null;
  let overlay: "none" | "cost" | "replay" = "none";
  let replayTimer: number | null = null;

  async function redraw(): Promise<void> {
    if (!session) return;
    const meta = session.meta;
    canvas.width = PX_WIDTH;
    canvas.height = Math.round(
      (PX_WIDTH * meta.height) / meta.width);
    drawRaster(ctx, meta, session.labels, PX_WIDTH);
    const graph = await api.graph(meta.id);
    drawBoundaries(ctx, meta, graph, PX_WIDTH);
    if (overlay === "cost" && modelInput.value) {
      const field = await api.costField(meta.id, modelInput.value);
      drawCostField(ctx, meta, graph, field.regions, PX_WIDTH);
    }
    drawPolyline(ctx, meta, session.lockedPrefix, PX_WIDTH, "#1440dc", 3);
    drawPolyline(ctx, meta, session.polyline, PX_WIDTH, "#dc28a0", 2);
    const poly = session.polyline;
    if (poly.length) drawMarker(ctx, meta, poly[0], PX_WIDTH, "#20a040");
  }

  async function openMap(id: string): Promise<void> {
    const meta = await api.mapMeta(id);
    session = new CanvasSession(api, meta, `ui-${id}`);
    overlay = "none";
    await redraw();
    status.textContent = `map ${id}: click to draw, then submit`;
  }

  mapSelect.addEventListener("change", () => openMap(mapSelect.value));

  canvas.addEventListener("click", async (ev) => {
    if (!session) return;
    const rect = canvas.getBoundingClientRect();
    const t = makeTransform(session.meta, PX_WIDTH);
    const p = t.toMap([ev.clientX - rect.left, ev.clientY - rect.top]) as Pt;
    if (!session.addPoint(p)) {
      status.textContent = "cannot place a point there (hard region)";
      return;
    }
    await redraw();
  });

  el<HTMLButtonElement>("undo").addEventListener("click", async () => {
    session?.undo();
    await redraw();
  });

  el<HTMLButtonElement>("submit").addEventListener("click", async () => {
    if (!session) return;
    try {
      const index = await session.submit();
      status.textContent = `stored demonstration #${index}`;
    } catch (err) {
      status.textContent = String(err);
    }
  });

  el<HTMLButtonElement>("perturb").addEventListener("click", async () => {
    if (!session) return;
    try {
      const mapId = await session.perturbAndRedraw();
      status.textContent =
        `perturbed into ${mapId}; redraw from the locked prefix`;
      await redraw();
    } catch (err) {
      status.textContent = String(err);
    }
  });

  el<HTMLButtonElement>("show-costs").addEventListener("click", async () => {
    overlay = overlay === "cost" ? "none" : "cost";
    await redraw();
  });

  el<HTMLButtonElement>("replay").addEventListener("click", async () => {
    if (!session) return;
    if (replayTimer !== null) {
      window.clearInterval(replayTimer);
      replayTimer = null;
    }
    const episode = await api.episode(episodeInput.value);
    let frame = 2;
    replayTimer = window.setInterval(async () => {
      await redraw();
      const shown = replayFrame(episode.trajectory, frame);
      drawPolyline(ctx, session!.meta, shown, PX_WIDTH, "#143cc8", 3);
      frame += 2;
      if (frame > episode.trajectory.length + 2 && replayTimer !== null) {
        window.clearInterval(replayTimer);
        replayTimer = null;
      }
    }, 60);
  });

  if (maps.length) {
    mapSelect.value = maps[0].id;
    await openMap(maps[0].id);
  } else {
    status.textContent = "no maps in the data directory";
  }
}

boot().catch((err) => {
  const status = document.getElementById("status");
  if (status) status.textContent = String(err);
});
