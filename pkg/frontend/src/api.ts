/** Thin fetch client for the session service. All odds-ratio numbers come
 * from the service: the client parses and passes payloads through verbatim.
 */

import type {
  BBoxData,
  ContoursPayload,
  DensityPayload,
  EmbeddingPayload,
  MetaPayload,
  RoiReport,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

async function parse<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = `HTTP ${resp.status}`;
    try {
      const body = (await resp.json()) as { error?: string };
      if (body.error) detail = body.error;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(detail, resp.status);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(
    private readonly base = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  meta(): Promise<MetaPayload> {
    return this.fetchFn(`${this.base}/api/meta`).then((r) => parse<MetaPayload>(r));
  }

  embedding(): Promise<EmbeddingPayload> {
    return this.fetchFn(`${this.base}/api/embedding`).then((r) => parse<EmbeddingPayload>(r));
  }

  density(group: string): Promise<DensityPayload> {
    const q = encodeURIComponent(group);
    return this.fetchFn(`${this.base}/api/density?group=${q}`).then((r) =>
      parse<DensityPayload>(r),
    );
  }

  contours(group: string): Promise<ContoursPayload> {
    const q = encodeURIComponent(group);
    return this.fetchFn(`${this.base}/api/contours?group=${q}`).then((r) =>
      parse<ContoursPayload>(r),
    );
  }

  roi(bbox: BBoxData, g1: string, g2: string): Promise<RoiReport> {
    return this.fetchFn(`${this.base}/api/roi`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ bbox, g1, g2 }),
    }).then((r) => parse<RoiReport>(r));
  }
}
