/** Explorer view state and the ROI panel model.
 *
 * Panel values are copied verbatim from service reports; the client never
 * derives a ratio (or any other report number) itself. Concurrent ROI
 * requests are matched to their ROI by a monotone request id and stale
 * responses are discarded.
 */

import type { BBoxData, RoiFlag, RoiReport } from "./types.js";
import { CELL_TYPE_NAMES } from "./types.js";

export interface LayerVisibility {
  scatter: boolean;
  contour: boolean;
}

export interface CompositionBar {
  type: string;
  mean: number;
  fraction: number; // mean / k, for bar widths
}

export interface PanelModel {
  group1: string;
  group2: string;
  n1: number;
  N1: number;
  n2: number;
  N2: number;
  f1: number;
  f2: number;
  ratio: number | null;
  ratioText: string;
  flag: RoiFlag;
  composition: CompositionBar[];
}

export interface SavedRoi {
  id: number;
  bbox: BBoxData;
  report: RoiReport | null;
  panel: PanelModel | null;
  pending: boolean;
  error: string | null;
}

/** Build the display model from a service report, verbatim. */
export function panelFromReport(report: RoiReport, k: number): PanelModel {
  let ratioText: string;
  if (report.flag === "finite" && report.ratio !== null) {
    ratioText = report.ratio >= 100 ? report.ratio.toFixed(0) : report.ratio.toFixed(3);
  } else if (report.flag === "infinite") {
    ratioText = "∞";
  } else {
    ratioText = "—";
  }
  const composition: CompositionBar[] = [];
  if (report.composition) {
    const mean = report.composition.pooled_mean;
    for (const type of report.composition.ranking) {
      const idx = (CELL_TYPE_NAMES as readonly string[]).indexOf(type);
      if (idx >= 0) {
        composition.push({ type, mean: mean[idx], fraction: mean[idx] / k });
      }
    }
  }
  return {
    group1: report.group1,
    group2: report.group2,
    n1: report.n1,
    N1: report.N1,
    n2: report.n2,
    N2: report.N2,
    f1: report.f1,
    f2: report.f2,
    ratio: report.ratio,
    ratioText,
    flag: report.flag,
    composition,
  };
}

export interface RoiRequester {
  roi(bbox: BBoxData, g1: string, g2: string): Promise<RoiReport>;
}

export class ExplorerState {
  groups: string[] = [];
  k = 10;
  g1 = "";
  g2 = "";
  layers = new Map<string, LayerVisibility>();
  rois: SavedRoi[] = [];

  private nextRoiId = 1;
  private requestCounter = 0;
  private latestRequest = new Map<number, number>();

  constructor(
    private readonly api: RoiRequester,
    private readonly onChange: () => void = () => {},
  ) {}

  init(groups: string[], k: number): void {
    this.groups = [...groups];
    this.k = k;
    for (const g of groups) {
      this.layers.set(g, { scatter: true, contour: true });
    }
    this.g1 = groups[0] ?? "";
    this.g2 = groups[1] ?? groups[0] ?? "";
  }

  visibility(group: string): LayerVisibility {
    return this.layers.get(group) ?? { scatter: false, contour: false };
  }

  /** Pure view toggle: no fetches, just re-render. */
  toggleLayer(group: string, which: keyof LayerVisibility): void {
    const vis = this.layers.get(group);
    if (vis) {
      vis[which] = !vis[which];
      this.onChange();
    }
  }

  /** Start a ROI request for a fresh drag. Degenerate boxes are ignored. */
  addRoi(bbox: BBoxData | null): SavedRoi | null {
    if (!bbox || bbox.xmin >= bbox.xmax || bbox.ymin >= bbox.ymax) {
      return null;
    }
    const roi: SavedRoi = {
      id: this.nextRoiId++,
      bbox,
      report: null,
      panel: null,
      pending: true,
      error: null,
    };
    this.rois.push(roi);
    void this.refresh(roi);
    return roi;
  }

  removeRoi(id: number): void {
    this.rois = this.rois.filter((r) => r.id !== id);
    this.latestRequest.delete(id);
    this.onChange();
  }

  /** Change the active pair; every saved ROI is re-quantified via the service. */
  setGroupPair(g1: string, g2: string): void {
    if (g1 === g2 || !this.groups.includes(g1) || !this.groups.includes(g2)) {
      return;
    }
    this.g1 = g1;
    this.g2 = g2;
    for (const roi of this.rois) {
      roi.pending = true;
      void this.refresh(roi);
    }
    this.onChange();
  }

  private async refresh(roi: SavedRoi): Promise<void> {
    const requestId = ++this.requestCounter;
    this.latestRequest.set(roi.id, requestId);
    try {
      const report = await this.api.roi(roi.bbox, this.g1, this.g2);
      if (this.latestRequest.get(roi.id) !== requestId) {
        return; // a newer request superseded this one
      }
      roi.report = report;
      roi.panel = panelFromReport(report, this.k);
      roi.pending = false;
      roi.error = null;
    } catch (err) {
      if (this.latestRequest.get(roi.id) !== requestId) {
        return;
      }
      roi.pending = false;
      roi.error = err instanceof Error ? err.message : String(err);
    }
    this.onChange();
  }
}

/** Nearest embedding entry to a data-space point, for the hover readout. */
export function nearestEntry<T extends { x: number; y: number }>(
  entries: T[],
  p: { x: number; y: number },
): { entry: T; distance: number } | null {
  let best: T | null = null;
  let bestD = Infinity;
  for (const e of entries) {
    const d = (e.x - p.x) ** 2 + (e.y - p.y) ** 2;
    if (d < bestD) {
      bestD = d;
      best = e;
    }
  }
  return best ? { entry: best, distance: Math.sqrt(bestD) } : null;
}
