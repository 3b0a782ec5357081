import { ParetoPoint } from "./types.js";

export interface PlotGeometry {
  width: number;
  height: number;
  margin: number;
}

export interface PlacedPoint {
  point: ParetoPoint;
  px: number;
  py: number;
}

/** Project objective vectors into pixel space (y axis flipped). */
export function placePoints(points: ParetoPoint[], geom: PlotGeometry): PlacedPoint[] {
  if (points.length === 0) return [];
  const xs = points.map((p) => p.objectives[0]);
  const ys = points.map((p) => p.objectives[1]);
  const x0 = Math.min(...xs);
  const x1 = Math.max(...xs);
  const y0 = Math.min(...ys);
  const y1 = Math.max(...ys);
  const spanX = x1 - x0 || 1;
  const spanY = y1 - y0 || 1;
  const innerW = geom.width - 2 * geom.margin;
  const innerH = geom.height - 2 * geom.margin;
  return points.map((point) => ({
    point,
    px: geom.margin + ((point.objectives[0] - x0) / spanX) * innerW,
    py: geom.height - geom.margin - ((point.objectives[1] - y0) / spanY) * innerH,
  }));
}

/** The front entry nearest to a click, or null when outside the hit radius. */
export function hitTest(
  placed: PlacedPoint[],
  x: number,
  y: number,
  radius = 12,
): PlacedPoint | null {
  let best: PlacedPoint | null = null;
  let bestDist = radius * radius;
  for (const candidate of placed) {
    const d = (candidate.px - x) ** 2 + (candidate.py - y) ** 2;
    if (d <= bestDist) {
      best = candidate;
      bestDist = d;
    }
  }
  return best;
}

/** Pareto explorer: renders the evaluated grid and posts the preference of
 * whichever entry the user clicks, exactly as served. */
export class ParetoPanel {
  placed: PlacedPoint[] = [];
  selected: ParetoPoint | null = null;

  constructor(
    private readonly geom: PlotGeometry,
    private readonly postPreference: (preference: number[]) => void,
  ) {}

  setPoints(points: ParetoPoint[]): void {
    this.placed = placePoints(points, this.geom);
  }

  /** Returns the preference that was posted, or null for a miss. */
  click(x: number, y: number): number[] | null {
    const hit = hitTest(this.placed, x, y);
    if (!hit) return null;
    this.selected = hit.point;
    const preference = [...hit.point.preference];
    this.postPreference(preference);
    return preference;
  }

  draw(ctx: CanvasRenderingContext2D): void {
    ctx.clearRect(0, 0, this.geom.width, this.geom.height);
    ctx.strokeStyle = "#8892a0";
    ctx.strokeRect(
      this.geom.margin,
      this.geom.margin,
      this.geom.width - 2 * this.geom.margin,
      this.geom.height - 2 * this.geom.margin,
    );
    for (const { point, px, py } of this.placed) {
      ctx.beginPath();
      ctx.arc(px, py, 5, 0, Math.PI * 2);
      ctx.fillStyle = point === this.selected ? "#ff6b35" : "#2a9d8f";
      ctx.fill();
    }
  }
}
