/** Canvas drawing: per-group scatter and contour layers, ROI overlays.
 *
 * Contour bands are painted from the service's precomputed density grid and
 * thresholds (never recomputed here): each grid is rasterized once to an
 * offscreen canvas at grid resolution, then blitted through the view
 * transform.
 */

import type { ViewTransform } from "./transform.js";
import type { ContoursPayload, DensityPayload, EmbeddingEntry } from "./types.js";
import type { SavedRoi } from "./state.js";

export const GROUP_COLORS = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#e377c2",
  "#17becf",
];

export function colorOf(groups: string[], group: string): string {
  const i = Math.max(groups.indexOf(group), 0);
  return GROUP_COLORS[i % GROUP_COLORS.length];
}

function hexToRgb(hex: string): [number, number, number] {
  return [
    parseInt(hex.slice(1, 3), 16),
    parseInt(hex.slice(3, 5), 16),
    parseInt(hex.slice(5, 7), 16),
  ];
}

/** Deterministic per-sig jitter in [-1, 1)^2 (visual de-overlap only). */
function jitterOf(sigId: number): [number, number] {
  const a = Math.sin(sigId * 127.1 + 311.7) * 43758.5453;
  const b = Math.sin(sigId * 269.5 + 183.3) * 28001.8384;
  return [2 * (a - Math.floor(a)) - 1, 2 * (b - Math.floor(b)) - 1];
}

export interface ContourLayer {
  group: string;
  canvas: HTMLCanvasElement;
  origin: [number, number];
  spanX: number;
  spanY: number;
}

/** Pre-render one group's HDR bands at grid resolution. */
export function buildContourLayer(
  density: DensityPayload,
  contours: ContoursPayload,
  color: string,
): ContourLayer {
  const { nx, ny, values } = density;
  const thresholds = contours.thresholds;
  const [r, g, b] = hexToRgb(color);
  const canvas = document.createElement("canvas");
  canvas.width = nx;
  canvas.height = ny;
  const ctx = canvas.getContext("2d")!;
  const img = ctx.createImageData(nx, ny);
  for (let iy = 0; iy < ny; iy++) {
    const row = values[iy];
    // canvas row 0 is the top; grid row 0 is the bottom
    const base = (ny - 1 - iy) * nx * 4;
    for (let ix = 0; ix < nx; ix++) {
      let band = 0;
      const v = row[ix];
      while (band < thresholds.length && v >= thresholds[band]) band++;
      if (band > 0) {
        const o = base + ix * 4;
        img.data[o] = r;
        img.data[o + 1] = g;
        img.data[o + 2] = b;
        img.data[o + 3] = Math.round(255 * (0.08 + 0.5 * (band / thresholds.length)));
      }
    }
  }
  ctx.putImageData(img, 0, 0);
  return {
    group: density.group,
    canvas,
    origin: [density.origin[0], density.origin[1]],
    spanX: density.nx * density.cell_size[0],
    spanY: density.ny * density.cell_size[1],
  };
}

export function drawContourLayer(
  ctx: CanvasRenderingContext2D,
  layer: ContourLayer,
  view: ViewTransform,
): void {
  const topLeft = view.toScreen({ x: layer.origin[0], y: layer.origin[1] + layer.spanY });
  const wPx = layer.spanX * view.scale;
  const hPx = layer.spanY * view.scale;
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(layer.canvas, topLeft.x, topLeft.y, wPx, hPx);
}

export function drawScatter(
  ctx: CanvasRenderingContext2D,
  entries: EmbeddingEntry[],
  group: string,
  color: string,
  view: ViewTransform,
  jitterRadiusPx: number,
): void {
  let wmax = 1;
  for (const e of entries) {
    const w = e.weights[group] ?? 0;
    if (w > wmax) wmax = w;
  }
  ctx.fillStyle = color;
  ctx.globalAlpha = 0.65;
  for (const e of entries) {
    const w = e.weights[group] ?? 0;
    if (w <= 0) continue;
    const s = view.toScreen({ x: e.x, y: e.y });
    const [jx, jy] = jitterOf(e.sig_id);
    const radius = 1.6 + 4.5 * Math.sqrt(w / wmax);
    ctx.beginPath();
    ctx.arc(s.x + jx * jitterRadiusPx, s.y + jy * jitterRadiusPx, radius, 0, 2 * Math.PI);
    ctx.fill();
  }
  ctx.globalAlpha = 1.0;
}

export function drawRois(
  ctx: CanvasRenderingContext2D,
  rois: SavedRoi[],
  view: ViewTransform,
  activeId: number | null,
): void {
  ctx.save();
  for (const roi of rois) {
    const a = view.toScreen({ x: roi.bbox.xmin, y: roi.bbox.ymax });
    const b = view.toScreen({ x: roi.bbox.xmax, y: roi.bbox.ymin });
    ctx.strokeStyle = roi.id === activeId ? "#111111" : "#555555";
    ctx.setLineDash(roi.pending ? [3, 3] : [6, 4]);
    ctx.lineWidth = roi.id === activeId ? 2 : 1.25;
    ctx.strokeRect(a.x, a.y, b.x - a.x, b.y - a.y);
    ctx.setLineDash([]);
    ctx.font = "11px sans-serif";
    ctx.fillStyle = "#111111";
    ctx.fillText(`ROI ${roi.id}`, a.x + 3, a.y - 4);
  }
  ctx.restore();
}

export function drawDragRect(
  ctx: CanvasRenderingContext2D,
  a: { x: number; y: number },
  b: { x: number; y: number },
): void {
  ctx.save();
  ctx.strokeStyle = "#111111";
  ctx.setLineDash([4, 3]);
  ctx.strokeRect(Math.min(a.x, b.x), Math.min(a.y, b.y), Math.abs(b.x - a.x), Math.abs(b.y - a.y));
  ctx.restore();
}
