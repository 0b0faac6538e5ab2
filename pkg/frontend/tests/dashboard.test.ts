import { describe, expect, it } from "vitest";
import { buildFpsOverlay, dipSeconds } from "../src/dashboard.js";
import { loadFixtureReport } from "./stub_server.js";
import type { RunReportDocument } from "../src/types.js";

describe("FPS overlay", () => {
  it("builds a before/after overlay from the reference report", () => {
    const overlay = buildFpsOverlay(loadFixtureReport() as RunReportDocument);
    expect(overlay).not.toBeNull();
    expect(overlay!.series.map((s) => s.label)).toEqual(["misconfigured", "corrected"]);
    expect(overlay!.markers.map((m) => m.label)).toEqual(["misconfigured", "corrected"]);
    expect(overlay!.nominalFps).toBe(30);
    expect(overlay!.crossingInterval).toEqual([25, 60]);
  });

  it("misconfigured dips align with misconfigured handover markers", () => {
    const overlay = buildFpsOverlay(loadFixtureReport() as RunReportDocument)!;
    const dips = dipSeconds(overlay, "misconfigured");
    expect(dips.length).toBeGreaterThanOrEqual(8);
    const markers = overlay.markers.find((m) => m.label === "misconfigured")!.times;
    // every dip second contains or directly follows a handover
    for (const second of dips) {
      const near = markers.some((t) => t >= second - 1 && t < second + 1);
      expect(near, `dip at second ${second} has no nearby handover`).toBe(true);
    }
  });

  it("corrected phase stays near nominal inside the crossing interval", () => {
    const overlay = buildFpsOverlay(loadFixtureReport() as RunReportDocument)!;
    const [lo, hi] = overlay.crossingInterval!;
    const corrected = overlay.series.find((s) => s.label === "corrected")!;
    const inWindow = corrected.points.filter((p) => p.t >= lo && p.t < hi);
    expect(inWindow.every((p) => p.fps === overlay.nominalFps)).toBe(true);
  });

  it("baseline-only report yields a single line", () => {
    const report = loadFixtureReport() as RunReportDocument;
    const single: RunReportDocument = {
      ...report,
      result: { ...report.result, phases: { misconfigured: report.result.phases.misconfigured } },
    };
    const overlay = buildFpsOverlay(single)!;
    expect(overlay.series).toHaveLength(1);
  });

  it("no report or no phases yields the empty state", () => {
    expect(buildFpsOverlay(null)).toBeNull();
    const report = loadFixtureReport() as RunReportDocument;
    const empty: RunReportDocument = {
      ...report,
      result: { ...report.result, phases: {} },
    };
    expect(buildFpsOverlay(empty)).toBeNull();
  });
});
