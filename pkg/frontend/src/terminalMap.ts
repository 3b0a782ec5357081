import { Frame, Layout } from "./types.js";

const STATUS_COLORS: Record<string, string> = {
  idle: "#8892a0",
  traveling_empty: "#f4d35e",
  queued_at_yard: "#e07a5f",
  serviced_at_yard: "#81b29a",
  traveling_loaded: "#3d9970",
  queued_at_qc: "#e07a5f",
  serviced_at_qc: "#2a9d8f",
  traveling_to_yard_loaded: "#3d9970",
};

/** Canvas map of the terminal: cranes on the berth line, the yard grid,
 * the depot, and each truck at its last node (status-colored, with a line
 * to its destination while driving). */
export class TerminalMap {
  private scaleX = 1;
  private scaleY = 1;
  private offX = 0;
  private offY = 0;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly layout: Layout,
  ) {
    const xs = layout.nodes.map((n) => n.x);
    const ys = layout.nodes.map((n) => n.y);
    const x0 = Math.min(...xs);
    const x1 = Math.max(...xs);
    const y0 = Math.min(...ys);
    const y1 = Math.max(...ys);
    const pad = 18;
    this.scaleX = (canvas.width - 2 * pad) / Math.max(x1 - x0, 1);
    this.scaleY = (canvas.height - 2 * pad) / Math.max(y1 - y0, 1);
    this.offX = pad - x0 * this.scaleX;
    this.offY = pad - y0 * this.scaleY;
  }

  private px(x: number): number {
    return x * this.scaleX + this.offX;
  }

  private py(y: number): number {
    // berth (y=0) at the bottom of the canvas
    return this.canvas.height - (y * this.scaleY + this.offY);
  }

  draw(frame: Frame): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    for (const node of this.layout.nodes) {
      const x = this.px(node.x);
      const y = this.py(node.y);
      if (node.kind === "qc") {
        ctx.fillStyle = "#577590";
        ctx.fillRect(x - 6, y - 6, 12, 12);
      } else if (node.kind === "yard") {
        ctx.strokeStyle = "#44576d";
        ctx.strokeRect(x - 5, y - 5, 10, 10);
      } else {
        ctx.fillStyle = "#9c6644";
        ctx.beginPath();
        ctx.moveTo(x, y - 7);
        ctx.lineTo(x + 7, y + 6);
        ctx.lineTo(x - 7, y + 6);
        ctx.fill();
      }
    }
    const byId = new Map(this.layout.nodes.map((n) => [n.id, n]));
    frame.trucks.forEach((truck, i) => {
      const at = byId.get(truck.node);
      if (!at) return;
      const x = this.px(at.x);
      const y = this.py(at.y);
      if (truck.dest !== null && truck.dest !== undefined) {
        const dest = byId.get(truck.dest);
        if (dest) {
          ctx.strokeStyle = "#44576d";
          ctx.setLineDash([3, 3]);
          ctx.beginPath();
          ctx.moveTo(x, y);
          ctx.lineTo(this.px(dest.x), this.py(dest.y));
          ctx.stroke();
          ctx.setLineDash([]);
        }
      }
      ctx.fillStyle = STATUS_COLORS[truck.status] ?? "#ffffff";
      ctx.beginPath();
      ctx.arc(x, y, 4, 0, Math.PI * 2);
      ctx.fill();
      ctx.fillStyle = "#c8d0da";
      ctx.font = "9px sans-serif";
      ctx.fillText(String(i), x + 5, y - 5);
    });
  }
}
