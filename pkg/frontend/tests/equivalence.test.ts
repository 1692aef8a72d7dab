/** UI / CLI equivalence on the planted-pattern session.
 *
 * tests/fixtures/roi_cases.json holds the exact JSON `cellnn roi` printed
 * for five scripted bounding boxes (regenerate with
 * scripts/generate_fixtures.py). The service replays each payload through a
 * mocked fetch; the panel shown for the drag must match the CLI output
 * field for field.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ExplorerState, panelFromReport } from "../src/state.js";
import { ViewTransform } from "../src/transform.js";
import type { BBoxData, RoiReport } from "../src/types.js";

interface Fixture {
  k: number;
  groups: string[];
  cases: {
    name: string;
    bbox: BBoxData;
    g1: string;
    g2: string;
    cli: RoiReport;
  }[];
}

const fixture: Fixture = JSON.parse(
  readFileSync(
    join(dirname(fileURLToPath(import.meta.url)), "fixtures", "roi_cases.json"),
    "utf-8",
  ),
);

function serviceFromRecording(expectBody: (body: unknown) => void) {
  const byKey = new Map<string, RoiReport>();
  for (const c of fixture.cases) {
    byKey.set(JSON.stringify({ bbox: c.bbox, g1: c.g1, g2: c.g2 }), c.cli);
  }
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    expect(url).toBe("/api/roi");
    expect(init?.method).toBe("POST");
    const body = JSON.parse(String(init?.body));
    expectBody(body);
    const hit = byKey.get(JSON.stringify(body));
    if (!hit) {
      return new Response(JSON.stringify({ error: "unknown bbox" }), { status: 400 });
    }
    return new Response(JSON.stringify(hit), {
      status: 200,
      headers: { "content-type": "application/json" },
    });
  };
  return new ApiClient("", fetchFn);
}

describe("UI/CLI equivalence on the planted session", () => {
  it("has the five scripted cases with all three flag states", () => {
    expect(fixture.cases).toHaveLength(5);
    const flags = new Set(fixture.cases.map((c) => c.cli.flag));
    expect(flags).toEqual(new Set(["finite", "infinite", "undefined"]));
  });

  for (const c of fixture.cases) {
    it(`panel equals CLI JSON for ${c.name}`, async () => {
      const api = serviceFromRecording((body) => {
        expect(body).toEqual({ bbox: c.bbox, g1: c.g1, g2: c.g2 });
      });
      const report = await api.roi(c.bbox, c.g1, c.g2);
      // the client passes the service payload through unmodified
      expect(report).toEqual(c.cli);

      const panel = panelFromReport(report, fixture.k);
      expect(panel.group1).toBe(c.cli.group1);
      expect(panel.group2).toBe(c.cli.group2);
      expect(panel.n1).toBe(c.cli.n1);
      expect(panel.n2).toBe(c.cli.n2);
      expect(panel.N1).toBe(c.cli.N1);
      expect(panel.N2).toBe(c.cli.N2);
      expect(panel.f1).toBe(c.cli.f1);
      expect(panel.f2).toBe(c.cli.f2);
      expect(panel.ratio).toBe(c.cli.ratio);
      expect(panel.flag).toBe(c.cli.flag);
      if (c.cli.composition) {
        expect(panel.composition.map((b) => b.type)).toEqual(c.cli.composition.ranking);
      }
    });
  }

  it("drag-to-report flow stores CLI-identical reports for all five boxes", async () => {
    const api = serviceFromRecording(() => {});
    // the scripted pair is (A, B) for the first four cases; drive those
    // through the full state machine, then switch pairs for the fifth
    const state = new ExplorerState(api);
    state.init(fixture.groups, fixture.k);
    const ab = fixture.cases.filter((c) => c.g1 === "A");
    const rois = ab.map((c) => state.addRoi(c.bbox)!);
    await new Promise((r) => setTimeout(r, 0));
    rois.forEach((roi, i) => {
      expect(roi.report).toEqual(ab[i].cli);
      expect(roi.error).toBeNull();
    });

    const ba = fixture.cases.find((c) => c.g1 === "B")!;
    const state2 = new ExplorerState(api);
    state2.init(fixture.groups, fixture.k);
    state2.setGroupPair("B", "A");
    const roi = state2.addRoi(ba.bbox)!;
    await new Promise((r) => setTimeout(r, 0));
    expect(roi.report).toEqual(ba.cli);
  });

  it("screen rectangles round-trip to the scripted bboxes within one pixel", () => {
    // pick a view covering the embedding; drawing the returned bbox and
    // converting back must land on the same screen rectangle
    const xs = fixture.cases.flatMap((c) => [c.bbox.xmin, c.bbox.xmax]);
    const ys = fixture.cases.flatMap((c) => [c.bbox.ymin, c.bbox.ymax]);
    let view = ViewTransform.fit(
      {
        xmin: Math.min(...xs),
        ymin: Math.min(...ys),
        xmax: Math.max(...xs),
        ymax: Math.max(...ys),
      },
      1000,
      800,
    );
    view = view.zoomAt({ x: 400, y: 300 }, 1.7).panBy(-120, 60);
    for (const c of fixture.cases) {
      const a = view.toScreen({ x: c.bbox.xmin, y: c.bbox.ymin });
      const b = view.toScreen({ x: c.bbox.xmax, y: c.bbox.ymax });
      const round = view.dragToBBox(a, b)!;
      expect(Math.abs(round.xmin - c.bbox.xmin) * view.scale).toBeLessThan(1.0);
      expect(Math.abs(round.ymin - c.bbox.ymin) * view.scale).toBeLessThan(1.0);
      expect(Math.abs(round.xmax - c.bbox.xmax) * view.scale).toBeLessThan(1.0);
      expect(Math.abs(round.ymax - c.bbox.ymax) * view.scale).toBeLessThan(1.0);
    }
  });
});
