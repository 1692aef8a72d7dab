/** Explorer bootstrap: data loading, canvas events, panel DOM. */

import { ApiClient } from "./api.js";
import {
  buildContourLayer,
  colorOf,
  drawContourLayer,
  drawDragRect,
  drawRois,
  drawScatter,
  type ContourLayer,
} from "./render.js";
import { ExplorerState, nearestEntry, type SavedRoi } from "./state.js";
import { ViewTransform, type Point } from "./transform.js";
import type { EmbeddingEntry } from "./types.js";

const api = new ApiClient("");

const canvas = document.getElementById("plot") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const layersBox = document.getElementById("layers")!;
const roiList = document.getElementById("roi-list")!;
const hoverBox = document.getElementById("hover")!;
const toastBox = document.getElementById("toasts")!;
const g1Select = document.getElementById("g1") as HTMLSelectElement;
const g2Select = document.getElementById("g2") as HTMLSelectElement;
const jitterInput = document.getElementById("jitter") as HTMLInputElement;
const resetButton = document.getElementById("reset-view") as HTMLButtonElement;
const modeInputs = Array.from(
  document.querySelectorAll<HTMLInputElement>('input[name="drag-mode"]'),
);

let entries: EmbeddingEntry[] = [];
let groups: string[] = [];
let view: ViewTransform = new ViewTransform(1, 0, 0, 800, 600);
const contourLayers = new Map<string, ContourLayer>();
let activeRoiId: number | null = null;
let dragStart: Point | null = null;
let dragCurrent: Point | null = null;
let panLast: Point | null = null;

const state = new ExplorerState(api, () => {
  renderRoiPanels();
  requestDraw();
});

function toast(message: string): void {
  const el = document.createElement("div");
  el.className = "toast";
  el.textContent = message;
  toastBox.appendChild(el);
  setTimeout(() => el.remove(), 4000);
}

let drawQueued = false;
function requestDraw(): void {
  if (!drawQueued) {
    drawQueued = true;
    requestAnimationFrame(() => {
      drawQueued = false;
      draw();
    });
  }
}

function draw(): void {
  const dpr = window.devicePixelRatio || 1;
  ctx.setTransform(dpr, 0, 0, dpr, 0, 0);
  ctx.clearRect(0, 0, view.width, view.height);
  for (const g of groups) {
    const vis = state.visibility(g);
    const layer = contourLayers.get(g);
    if (vis.contour && layer) drawContourLayer(ctx, layer, view);
  }
  const jitterPx = jitterInput.checked ? 2.5 : 0;
  for (const g of groups) {
    if (state.visibility(g).scatter) {
      drawScatter(ctx, entries, g, colorOf(groups, g), view, jitterPx);
    }
  }
  drawRois(ctx, state.rois, view, activeRoiId);
  if (dragStart && dragCurrent) drawDragRect(ctx, dragStart, dragCurrent);
}

function fitView(): void {
  if (entries.length === 0) return;
  const xs = entries.map((e) => e.x);
  const ys = entries.map((e) => e.y);
  view = ViewTransform.fit(
    {
      xmin: Math.min(...xs),
      ymin: Math.min(...ys),
      xmax: Math.max(...xs),
      ymax: Math.max(...ys),
    },
    view.width,
    view.height,
  );
}

function resizeCanvas(): void {
  const rect = canvas.parentElement!.getBoundingClientRect();
  const dpr = window.devicePixelRatio || 1;
  canvas.width = Math.round(rect.width * dpr);
  canvas.height = Math.round(rect.height * dpr);
  canvas.style.width = `${rect.width}px`;
  canvas.style.height = `${rect.height}px`;
  view = view.resize(rect.width, rect.height);
  requestDraw();
}

function badgeHtml(roi: SavedRoi): string {
  if (roi.pending) return '<span class="badge pending">…</span>';
  if (roi.error) return '<span class="badge err">error</span>';
  const panel = roi.panel!;
  if (panel.flag === "finite") return `<span class="badge ok">${panel.ratioText}</span>`;
  return `<span class="badge ${panel.flag}">${panel.ratioText}</span>`;
}

function renderRoiPanels(): void {
  roiList.innerHTML = "";
  for (const roi of [...state.rois].reverse()) {
    const div = document.createElement("div");
    div.className = "roi-card" + (roi.id === activeRoiId ? " active" : "");
    const head = document.createElement("div");
    head.className = "roi-head";
    head.innerHTML = `<b>ROI ${roi.id}</b> ${badgeHtml(roi)}`;
    const close = document.createElement("button");
    close.textContent = "×";
    close.title = "remove";
    close.addEventListener("click", () => state.removeRoi(roi.id));
    head.appendChild(close);
    div.appendChild(head);
    if (roi.error) {
      const p = document.createElement("div");
      p.className = "roi-body err";
      p.textContent = roi.error;
      div.appendChild(p);
    } else if (roi.panel) {
      const p = roi.panel;
      const body = document.createElement("div");
      body.className = "roi-body";
      body.innerHTML =
        `<div>${p.group1}: ${p.n1} / ${p.N1} &nbsp; (f1 = ${p.f1.toPrecision(4)})</div>` +
        `<div>${p.group2}: ${p.n2} / ${p.N2} &nbsp; (f2 = ${p.f2.toPrecision(4)})</div>`;
      const bars = document.createElement("div");
      bars.className = "bars";
      for (const c of p.composition) {
        const row = document.createElement("div");
        row.className = "bar-row";
        row.innerHTML =
          `<span class="bar-label">${c.type}</span>` +
          `<span class="bar" style="width:${Math.round(100 * c.fraction)}%"></span>` +
          `<span class="bar-value">${c.mean.toFixed(2)}</span>`;
        bars.appendChild(row);
      }
      body.appendChild(bars);
      div.appendChild(body);
    }
    div.addEventListener("mouseenter", () => {
      activeRoiId = roi.id;
      requestDraw();
    });
    div.addEventListener("mouseleave", () => {
      activeRoiId = null;
      requestDraw();
    });
    roiList.appendChild(div);
  }
}

function renderLayerToggles(): void {
  layersBox.innerHTML = "";
  for (const g of groups) {
    const row = document.createElement("div");
    row.className = "layer-row";
    const swatch = `<span class="swatch" style="background:${colorOf(groups, g)}"></span>`;
    row.innerHTML = `${swatch}<span class="layer-name">${g}</span>`;
    for (const which of ["scatter", "contour"] as const) {
      const label = document.createElement("label");
      const box = document.createElement("input");
      box.type = "checkbox";
      box.checked = state.visibility(g)[which];
      box.addEventListener("change", () => state.toggleLayer(g, which));
      label.appendChild(box);
      label.appendChild(document.createTextNode(which));
      row.appendChild(label);
    }
    layersBox.appendChild(row);
  }
}

function renderGroupSelectors(): void {
  for (const sel of [g1Select, g2Select]) {
    sel.innerHTML = "";
    for (const g of groups) {
      const opt = document.createElement("option");
      opt.value = g;
      opt.textContent = g;
      sel.appendChild(opt);
    }
  }
  g1Select.value = state.g1;
  g2Select.value = state.g2;
  const onPair = () => {
    if (g1Select.value === g2Select.value) {
      toast("group 1 and group 2 must differ");
      g1Select.value = state.g1;
      g2Select.value = state.g2;
      return;
    }
    state.setGroupPair(g1Select.value, g2Select.value);
  };
  g1Select.addEventListener("change", onPair);
  g2Select.addEventListener("change", onPair);
}

function dragMode(): string {
  return modeInputs.find((i) => i.checked)?.value ?? "roi";
}

function pointerPos(ev: PointerEvent): Point {
  const rect = canvas.getBoundingClientRect();
  return { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
}

function wireCanvas(): void {
  canvas.addEventListener("pointerdown", (ev) => {
    const p = pointerPos(ev);
    canvas.setPointerCapture(ev.pointerId);
    if (ev.button === 1 || ev.shiftKey || dragMode() === "pan") {
      panLast = p;
    } else {
      dragStart = p;
      dragCurrent = p;
    }
  });
  canvas.addEventListener("pointermove", (ev) => {
    const p = pointerPos(ev);
    if (panLast) {
      view = view.panBy(p.x - panLast.x, p.y - panLast.y);
      panLast = p;
      requestDraw();
      return;
    }
    if (dragStart) {
      dragCurrent = p;
      requestDraw();
      return;
    }
    const d = view.toData(p);
    const hit = nearestEntry(entries, d);
    if (hit && hit.distance * view.scale < 24) {
      const e = hit.entry;
      const weights = groups.map((g) => `${g}: ${e.weights[g] ?? 0}`).join(", ");
      hoverBox.innerHTML =
        `<b>sig ${e.sig_id}</b> &nbsp; [${e.signature.join(", ")}]` +
        `<br>weights &mdash; ${weights}`;
    } else {
      hoverBox.innerHTML = "&nbsp;<br>&nbsp;";
    }
  });
  canvas.addEventListener("pointerup", (ev) => {
    const p = pointerPos(ev);
    if (panLast) {
      panLast = null;
      return;
    }
    if (dragStart) {
      const bbox = view.dragToBBox(dragStart, p);
      dragStart = null;
      dragCurrent = null;
      requestDraw();
      if (bbox) {
        const roi = state.addRoi(bbox);
        if (roi) activeRoiId = roi.id;
      }
    }
  });
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    view = view.zoomAt(pointerPos(ev as unknown as PointerEvent), Math.exp(-ev.deltaY * 0.0015));
    requestDraw();
  });
  resetButton.addEventListener("click", () => {
    fitView();
    requestDraw();
  });
  jitterInput.addEventListener("change", requestDraw);
  window.addEventListener("resize", resizeCanvas);
}

async function boot(): Promise<void> {
  try {
    const [meta, embedding] = await Promise.all([api.meta(), api.embedding()]);
    groups = embedding.groups;
    entries = embedding.entries;
    state.init(groups, meta.k);
    document.getElementById("session-info")!.textContent =
      `${meta.n_entries} signatures, anchor ${meta.anchor_type}, k = ${meta.k}`;
    renderLayerToggles();
    renderGroupSelectors();
    resizeCanvas();
    fitView();
    requestDraw();
    for (const g of meta.density_groups) {
      try {
        const [density, contours] = await Promise.all([api.density(g), api.contours(g)]);
        contourLayers.set(g, buildContourLayer(density, contours, colorOf(groups, g)));
        requestDraw();
      } catch (err) {
        toast(`density for ${g} unavailable: ${err instanceof Error ? err.message : err}`);
      }
    }
  } catch (err) {
    toast(`failed to load session: ${err instanceof Error ? err.message : err}`);
    return;
  }
  wireCanvas();
}

void boot();
