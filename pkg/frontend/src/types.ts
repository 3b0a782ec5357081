/** Payload shapes of the quaydeck-api/1 service. */

export const API_VERSION = "quaydeck-api/1";

export interface QcFrameEntry {
  queue: number;
  remaining: number;
  idle: number;
}

export interface TruckFrameEntry {
  node: number;
  status: string;
  dest: number | null;
}

export interface Decision {
  truck: number;
  qc: number;
  probabilities: number[];
  active_qcs: number[];
  preference: number[];
  calibrated_preference: number[];
}

export interface Frame {
  api: string;
  kind: "snapshot" | "decision" | "clock" | "terminal";
  session: string;
  seq: number;
  clock: number;
  done: boolean;
  mode: string;
  qcs: QcFrameEntry[];
  trucks: TruckFrameEntry[];
  objectives: { idle: number; dist: number };
  decision: Decision | null;
}

export interface LayoutNode {
  id: number;
  kind: "qc" | "yard" | "depot";
  x: number;
  y: number;
}

export interface Layout {
  nodes: LayoutNode[];
  qc_count: number;
  yard_count: number;
  task_count: number;
}

export interface SessionCreated {
  api: string;
  session_id: string;
  state: Frame;
  layout: Layout;
}

export interface ParetoPoint {
  preference: number[];
  objectives: number[];
  normalized: number[] | null;
  label: string;
}

export interface ParetoResponse {
  api: string;
  checkpoint_id: string;
  instance_id: string;
  C: number;
  seed: number;
  points: ParetoPoint[];
}
