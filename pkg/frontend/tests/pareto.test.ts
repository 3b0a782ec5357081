import { describe, expect, it } from "vitest";

import { ParetoPanel, hitTest, placePoints } from "../src/pareto.js";
import { ParetoPoint } from "../src/types.js";

const GEOM = { width: 200, height: 200, margin: 10 };

function gridPoints(n = 11): ParetoPoint[] {
  // A decreasing front like the service returns for an 11-point grid.
  return Array.from({ length: n }, (_, i) => ({
    preference: [1 - i / (n - 1), i / (n - 1)],
    objectives: [10 + i, 100 - 5 * i],
    normalized: null,
    label: "policy",
  }));
}

describe("placePoints", () => {
  it("maps objective extremes to the plot corners", () => {
    const placed = placePoints(gridPoints(), GEOM);
    expect(placed[0].px).toBeCloseTo(GEOM.margin);
    expect(placed[0].py).toBeCloseTo(GEOM.margin); // highest objective 2 at top
    expect(placed[10].px).toBeCloseTo(GEOM.width - GEOM.margin);
    expect(placed[10].py).toBeCloseTo(GEOM.height - GEOM.margin);
  });

  it("handles a single point without dividing by zero", () => {
    const placed = placePoints(gridPoints(1), GEOM);
    expect(Number.isFinite(placed[0].px)).toBe(true);
  });
});

describe("hitTest", () => {
  it("returns the nearest point within the radius, else null", () => {
    const placed = placePoints(gridPoints(), GEOM);
    const target = placed[4];
    expect(hitTest(placed, target.px + 3, target.py - 2)).toBe(target);
    expect(hitTest(placed, 0.5, 195)).toBeNull();
  });
});

describe("ParetoPanel", () => {
  it("clicking an entry posts exactly the preference it was served with", () => {
    const posted: number[][] = [];
    const panel = new ParetoPanel(GEOM, (p) => posted.push(p));
    const points = gridPoints(11);
    panel.setPoints(points);
    const target = panel.placed[7];
    const result = panel.click(target.px, target.py);
    expect(result).toEqual(points[7].preference);
    expect(posted).toEqual([points[7].preference]);
    expect(posted[0]).not.toBe(points[7].preference); // defensive copy
    expect(panel.selected).toBe(points[7]);
  });

  it("a miss posts nothing", () => {
    const posted: number[][] = [];
    const panel = new ParetoPanel(GEOM, (p) => posted.push(p));
    panel.setPoints(gridPoints());
    expect(panel.click(-40, -40)).toBeNull();
    expect(posted).toEqual([]);
  });
});
