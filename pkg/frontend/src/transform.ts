/** Affine pan/zoom mapping between embedding coordinates and screen pixels.
 *
 * Screen y grows downward, embedding y upward. The transform is a pure
 * value object: pan/zoom return new instances, so view state is snapshot-
 * friendly and the data<->screen round trip stays well inside one device
 * pixel at any zoom (double precision everywhere).
 */

import type { BBoxData } from "./types.js";

export interface Point {
  x: number;
  y: number;
}

export interface Bounds {
  xmin: number;
  ymin: number;
  xmax: number;
  ymax: number;
}

export class ViewTransform {
  constructor(
    readonly scale: number, // pixels per data unit
    readonly centerX: number, // data point at the viewport center
    readonly centerY: number,
    readonly width: number, // viewport size in pixels
    readonly height: number,
  ) {}

  /** Fit bounds into a viewport with a relative margin. */
  static fit(bounds: Bounds, width: number, height: number, margin = 0.06): ViewTransform {
    const spanX = Math.max(bounds.xmax - bounds.xmin, 1e-12);
    const spanY = Math.max(bounds.ymax - bounds.ymin, 1e-12);
    const scale = Math.min(width / (spanX * (1 + 2 * margin)), height / (spanY * (1 + 2 * margin)));
    return new ViewTransform(
      scale,
      (bounds.xmin + bounds.xmax) / 2,
      (bounds.ymin + bounds.ymax) / 2,
      width,
      height,
    );
  }

  toScreen(p: Point): Point {
    return {
      x: (p.x - this.centerX) * this.scale + this.width / 2,
      y: (this.centerY - p.y) * this.scale + this.height / 2,
    };
  }

  toData(s: Point): Point {
    return {
      x: (s.x - this.width / 2) / this.scale + this.centerX,
      y: this.centerY - (s.y - this.height / 2) / this.scale,
    };
  }

  /** Pan by a screen-pixel delta (content follows the pointer). */
  panBy(dxPx: number, dyPx: number): ViewTransform {
    return new ViewTransform(
      this.scale,
      this.centerX - dxPx / this.scale,
      this.centerY + dyPx / this.scale,
      this.width,
      this.height,
    );
  }

  /** Zoom by a factor keeping the data point under `anchor` fixed on screen. */
  zoomAt(anchor: Point, factor: number): ViewTransform {
    const scale = Math.min(Math.max(this.scale * factor, 1e-9), 1e12);
    const d = this.toData(anchor);
    return new ViewTransform(
      scale,
      d.x - (anchor.x - this.width / 2) / scale,
      d.y + (anchor.y - this.height / 2) / scale,
      this.width,
      this.height,
    );
  }

  resize(width: number, height: number): ViewTransform {
    return new ViewTransform(this.scale, this.centerX, this.centerY, width, height);
  }

  /** Normalize a screen-space drag rectangle into an embedding bbox. */
  dragToBBox(a: Point, b: Point): BBoxData | null {
    if (a.x === b.x || a.y === b.y) {
      return null; // degenerate drag
    }
    const p = this.toData(a);
    const q = this.toData(b);
    return {
      xmin: Math.min(p.x, q.x),
      ymin: Math.min(p.y, q.y),
      xmax: Math.max(p.x, q.x),
      ymax: Math.max(p.y, q.y),
    };
  }
}
