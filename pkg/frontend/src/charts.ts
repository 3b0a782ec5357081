import { Frame } from "./types.js";

/** Minimal canvas line chart of one numeric series against frame seq. */
export class LineChart {
  private xs: number[] = [];
  private ys: number[] = [];

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly pick: (f: Frame) => number,
    private readonly color: string,
    private readonly label: string,
  ) {}

  push(frame: Frame): void {
    this.xs.push(frame.seq);
    this.ys.push(this.pick(frame));
    this.draw();
  }

  lastValue(): number | null {
    return this.ys.length ? this.ys[this.ys.length - 1] : null;
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx || this.xs.length === 0) return;
    const w = this.canvas.width;
    const h = this.canvas.height;
    ctx.clearRect(0, 0, w, h);
    const x0 = this.xs[0];
    const x1 = this.xs[this.xs.length - 1] || 1;
    const yMax = Math.max(...this.ys, 1e-9);
    ctx.beginPath();
    this.xs.forEach((x, i) => {
      const px = ((x - x0) / Math.max(x1 - x0, 1)) * (w - 10) + 5;
      const py = h - 5 - (this.ys[i] / yMax) * (h - 20);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.strokeStyle = this.color;
    ctx.lineWidth = 1.5;
    ctx.stroke();
    ctx.fillStyle = "#c8d0da";
    ctx.font = "11px sans-serif";
    ctx.fillText(`${this.label}: ${this.ys[this.ys.length - 1].toFixed(1)}`, 6, 12);
  }
}

/** Horizontal bars of per-crane queue lengths and remaining work. */
export function drawQueueBars(canvas: HTMLCanvasElement, frame: Frame): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  const n = frame.qcs.length;
  const rowH = h / Math.max(n, 1);
  const maxRemaining = Math.max(...frame.qcs.map((q) => q.remaining), 1);
  frame.qcs.forEach((qc, i) => {
    const y = i * rowH;
    ctx.fillStyle = "#30475e";
    ctx.fillRect(40, y + 4, ((w - 90) * qc.remaining) / maxRemaining, rowH / 2 - 5);
    ctx.fillStyle = "#ff6b35";
    ctx.fillRect(40, y + rowH / 2 + 1, Math.min(qc.queue, 10) * 14, rowH / 2 - 5);
    ctx.fillStyle = "#c8d0da";
    ctx.font = "11px sans-serif";
    ctx.fillText(`QC${i}`, 6, y + rowH / 2 + 4);
    ctx.fillText(`q=${qc.queue} left=${qc.remaining}`, w - 86, y + rowH / 2 + 4);
  });
}
