// Dashboard data preparation: FPS-over-time lines per phase plus handover
// markers, ready for any plotting layer (the app draws them on a canvas).

import type { RunReportDocument } from "./types.js";

export interface FpsSeries {
  label: string;
  points: { t: number; fps: number }[];
}

export interface MarkerSeries {
  label: string;
  times: number[];
}

export interface FpsOverlay {
  series: FpsSeries[];
  markers: MarkerSeries[];
  nominalFps: number;
  crossingInterval: [number, number] | null;
}

const PHASE_ORDER = ["misconfigured", "corrected"];

/** Before/after overlay when both phases exist; single line otherwise. */
export function buildFpsOverlay(report: RunReportDocument | null): FpsOverlay | null {
  if (!report) return null;
  const phases = report.result.phases ?? {};
  const names = PHASE_ORDER.filter((name) => name in phases);
  if (names.length === 0) return null;
  const series: FpsSeries[] = names.map((name) => ({
    label: name,
    points: phases[name].fps.map(([t, fps]) => ({ t, fps })),
  }));
  const markers: MarkerSeries[] = names.map((name) => ({
    label: name,
    times: phases[name].handovers.map((h) => h.time_s),
  }));
  return {
    series,
    markers,
    nominalFps: phases[names[0]].nominal_fps,
    crossingInterval: report.result.crossing_interval_s,
  };
}

/** Seconds whose fps dips below nominal, for sanity/alignment checks. */
export function dipSeconds(overlay: FpsOverlay, label: string): number[] {
  const line = overlay.series.find((s) => s.label === label);
  if (!line) return [];
  return line.points.filter((p) => p.fps < overlay.nominalFps).map((p) => p.t);
}
