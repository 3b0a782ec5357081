import { ApiClient } from "./api.js";
import { LineChart, drawQueueBars } from "./charts.js";
import { ParetoPanel } from "./pareto.js";
import { SessionView } from "./state.js";
import { FrameStream } from "./stream.js";
import { TerminalMap } from "./terminalMap.js";
import { Frame, Layout } from "./types.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

/** Debounce slider input so dragging posts once, not per pixel. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  ms: number,
): (...args: A) => void {
  let timer: ReturnType<typeof setTimeout> | null = null;
  return (...args: A) => {
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(() => fn(...args), ms);
  };
}

class Dashboard {
  private api = new ApiClient("");
  private view = new SessionView();
  private sessionId: string | null = null;
  private map: TerminalMap | null = null;
  private idleChart: LineChart | null = null;
  private distChart: LineChart | null = null;
  private pareto: ParetoPanel | null = null;
  private pendingPref: number[] | null = null;
  private highlightSeq: number | null = null;

  async connect(): Promise<void> {
    const instance = byId<HTMLInputElement>("instance-id").value;
    const checkpoint = byId<HTMLInputElement>("checkpoint-id").value;
    const calibrate = byId<HTMLInputElement>("calibrate").checked;
    const seed = Number(byId<HTMLInputElement>("seed").value);
    const created = await this.api.createSession({
      instance_id: instance,
      checkpoint_id: checkpoint,
      preference: this.sliderPreference(),
      seed,
      calibrate,
    });
    this.sessionId = created.session_id;
    this.setupPanels(created.layout);
    this.view.apply(created.state);
    this.renderFrame(created.state);
    this.view.onFrame((f) => this.renderFrame(f));
    new FrameStream(this.api, created.session_id, this.view).connect();
    byId<HTMLElement>("session-label").textContent = created.session_id;
    void this.loadPareto(instance, checkpoint);
  }

  private setupPanels(layout: Layout): void {
    this.map = new TerminalMap(byId<HTMLCanvasElement>("map"), layout);
    this.idleChart = new LineChart(
      byId<HTMLCanvasElement>("chart-idle"),
      (f) => f.objectives.idle,
      "#e07a5f",
      "cumulative idle (s)",
    );
    this.distChart = new LineChart(
      byId<HTMLCanvasElement>("chart-dist"),
      (f) => f.objectives.dist,
      "#f4d35e",
      "empty mileage (m)",
    );
  }

  private async loadPareto(instanceId: string, checkpointId: string): Promise<void> {
    const canvas = byId<HTMLCanvasElement>("pareto");
    this.pareto = new ParetoPanel(
      { width: canvas.width, height: canvas.height, margin: 16 },
      (preference) => {
        this.setSlider(preference);
        void this.postPreference(preference);
      },
    );
    try {
      const front = await this.api.pareto({
        checkpoint_id: checkpointId,
        instance_id: instanceId,
        grid: 11,
        C: Number(byId<HTMLInputElement>("pareto-c").value || "4"),
      });
      this.pareto.setPoints(front.points);
      this.pareto.draw(canvas.getContext("2d")!);
      canvas.onclick = (ev) => {
        const rect = canvas.getBoundingClientRect();
        this.pareto!.click(ev.clientX - rect.left, ev.clientY - rect.top);
        this.pareto!.draw(canvas.getContext("2d")!);
      };
    } catch (err) {
      byId<HTMLElement>("pareto-status").textContent = `pareto unavailable: ${err}`;
    }
  }

  sliderPreference(): number[] {
    const p1 = Number(byId<HTMLInputElement>("pref-slider").value) / 100;
    return [p1, 1 - p1];
  }

  setSlider(preference: number[]): void {
    byId<HTMLInputElement>("pref-slider").value = String(Math.round(preference[0] * 100));
    byId<HTMLElement>("pref-label").textContent =
      `[${preference[0].toFixed(2)}, ${preference[1].toFixed(2)}]`;
  }

  async postPreference(preference: number[]): Promise<void> {
    if (!this.sessionId) return;
    this.pendingPref = preference;
    this.highlightSeq = null;
    await this.api.setPreference(this.sessionId, preference);
  }

  async control(command: "run" | "pause" | "step"): Promise<void> {
    if (!this.sessionId) return;
    const frame = await this.api.control(this.sessionId, command, { steps: 1 });
    this.view.apply(frame);
  }

  private renderFrame(frame: Frame): void {
    byId<HTMLElement>("clock").textContent = `${frame.clock.toFixed(1)} s`;
    byId<HTMLElement>("mode").textContent = frame.done ? "done" : frame.mode;
    const obj = this.view.objectives();
    if (obj) {
      byId<HTMLElement>("objective-values").textContent =
        `idle ${obj.idle.toFixed(1)} s | empty ${obj.dist.toFixed(1)} m`;
    }
    this.map?.draw(frame);
    this.idleChart?.push(frame);
    this.distChart?.push(frame);
    drawQueueBars(byId<HTMLCanvasElement>("queues"), frame);
    if (frame.kind === "decision" && frame.decision) {
      if (
        this.pendingPref &&
        this.highlightSeq === null &&
        frame.decision.preference.every((v, i) => v === this.pendingPref![i])
      ) {
        this.highlightSeq = frame.seq;
      }
      const row = document.createElement("div");
      row.className = "decision-row" + (frame.seq === this.highlightSeq ? " new-pref" : "");
      const d = frame.decision;
      row.textContent =
        `#${frame.seq} t=${frame.clock.toFixed(0)}s truck ${d.truck} -> QC${d.qc} ` +
        `p=[${d.preference.map((v) => v.toFixed(2)).join(", ")}]` +
        (d.calibrated_preference.some((v, i) => v !== d.preference[i])
          ? ` (cal [${d.calibrated_preference.map((v) => v.toFixed(2)).join(", ")}])`
          : "");
      const log = byId<HTMLElement>("decision-log");
      log.prepend(row);
      while (log.childElementCount > 60) log.lastElementChild?.remove();
    }
  }
}

export function start(): void {
  const dash = new Dashboard();
  byId<HTMLButtonElement>("connect").onclick = () => void dash.connect();
  byId<HTMLButtonElement>("run").onclick = () => void dash.control("run");
  byId<HTMLButtonElement>("pause").onclick = () => void dash.control("pause");
  byId<HTMLButtonElement>("step").onclick = () => void dash.control("step");
  const slider = byId<HTMLInputElement>("pref-slider");
  const post = debounce(() => void dash.postPreference(dash.sliderPreference()), 200);
  slider.oninput = () => {
    dash.setSlider(dash.sliderPreference());
    post();
  };
}

if (typeof document !== "undefined" && document.getElementById("connect")) {
  start();
}
