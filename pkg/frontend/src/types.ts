/** Payload shapes of the session service API (schema_version 1). */

export interface EmbeddingEntry {
  sig_id: number;
  x: number;
  y: number;
  /** neighbor counts in type order neu, epi, lym, pla, eos, con; sums to k */
  signature: number[];
  weights: Record<string, number>;
}

export interface EmbeddingPayload {
  schema_version: number;
  groups: string[];
  entries: EmbeddingEntry[];
}

export interface MetaPayload {
  schema_version: number;
  groups: string[];
  anchor_type: string;
  k: number;
  n_entries: number;
  density_groups: string[];
}

export interface DensityPayload {
  schema_version: number;
  group: string;
  origin: [number, number];
  cell_size: [number, number];
  nx: number;
  ny: number;
  bandwidth: [number, number];
  /** row-major, values[iy][ix], densities per unit area */
  values: number[][];
}

export interface ContoursPayload {
  schema_version: number;
  group: string;
  quantiles: number[];
  thresholds: number[];
}

export interface BBoxData {
  xmin: number;
  ymin: number;
  xmax: number;
  ymax: number;
}

export type RoiFlag = "finite" | "infinite" | "undefined";

export interface RoiComposition {
  pooled_mean: number[];
  per_group: Record<string, number[] | null>;
  ranking: string[];
  total_weight: number;
}

export interface RoiReport {
  schema_version: number;
  bbox: BBoxData;
  group1: string;
  group2: string;
  n1: number;
  n2: number;
  N1: number;
  N2: number;
  f1: number;
  f2: number;
  ratio: number | null;
  flag: RoiFlag;
  entries: { sig_id: number; signature: number[]; weights: Record<string, number> }[];
  composition: RoiComposition | null;
}

export const CELL_TYPE_NAMES = ["neu", "epi", "lym", "pla", "eos", "con"] as const;
