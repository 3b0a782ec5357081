import { Frame } from "./types.js";

/** Client-side view of one session: latest frame plus a bounded history.
 *
 * Frames apply only in increasing seq order; anything stale or duplicated
 * (reconnects, snapshot resyncs) is dropped, so charts never run backwards.
 * Objective values are taken verbatim from frames, never recomputed here.
 */
export class SessionView {
  latest: Frame | null = null;
  readonly frames: Frame[] = [];
  readonly decisions: Frame[] = [];
  private readonly capacity: number;
  private listeners: Array<(frame: Frame) => void> = [];

  constructor(capacity = 512) {
    this.capacity = capacity;
  }

  /** Returns true when the frame advanced the view. */
  apply(frame: Frame): boolean {
    if (this.latest !== null && frame.seq <= this.latest.seq) {
      return false;
    }
    this.latest = frame;
    this.frames.push(frame);
    if (this.frames.length > this.capacity) {
      this.frames.splice(0, this.frames.length - this.capacity);
    }
    if (frame.kind === "decision") {
      this.decisions.push(frame);
      if (this.decisions.length > this.capacity) {
        this.decisions.splice(0, this.decisions.length - this.capacity);
      }
    }
    for (const fn of this.listeners) fn(frame);
    return true;
  }

  onFrame(fn: (frame: Frame) => void): void {
    this.listeners.push(fn);
  }

  /** Cumulative objectives shown in the UI: always the latest frame's values. */
  objectives(): { idle: number; dist: number } | null {
    return this.latest ? this.latest.objectives : null;
  }

  /** Seq of the first decision whose preference equals p (for highlighting
   * where a slider change took effect). */
  firstDecisionWith(p: number[]): number | null {
    for (const f of this.decisions) {
      const used = f.decision?.preference;
      if (used && used.length === p.length && used.every((v, i) => v === p[i])) {
        return f.seq;
      }
    }
    return null;
  }

  objectiveSeries(): Array<{ seq: number; clock: number; idle: number; dist: number }> {
    return this.frames.map((f) => ({
      seq: f.seq,
      clock: f.clock,
      idle: f.objectives.idle,
      dist: f.objectives.dist,
    }));
  }
}

/** Reconnect policy: after a stream gap, apply the snapshot (if newer) and
 * keep charts monotone in seq. Returns the frames that were accepted. */
export function resync(view: SessionView, snapshot: Frame, backlog: Frame[]): Frame[] {
  const accepted: Frame[] = [];
  if (view.apply(snapshot)) accepted.push(snapshot);
  for (const frame of backlog) {
    if (view.apply(frame)) accepted.push(frame);
  }
  return accepted;
}
