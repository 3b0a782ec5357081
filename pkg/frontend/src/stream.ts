import { ApiClient } from "./api.js";
import { SessionView } from "./state.js";
import { Frame } from "./types.js";

/** WebSocket frame feed with snapshot resync on reconnect. */
export class FrameStream {
  private ws: WebSocket | null = null;
  private closed = false;

  constructor(
    private readonly api: ApiClient,
    private readonly sessionId: string,
    private readonly view: SessionView,
  ) {}

  connect(): void {
    if (this.ws || this.closed) return;
    const ws = new WebSocket(this.api.streamUrl(this.sessionId));
    this.ws = ws;
    ws.onmessage = (ev) => {
      const frame = JSON.parse(ev.data) as Frame;
      this.view.apply(frame);
    };
    ws.onclose = () => {
      this.ws = null;
      if (this.closed || this.view.latest?.done) return;
      // Gap: resync from the state endpoint, then reopen the stream.
      this.api
        .state(this.sessionId)
        .then((snapshot) => {
          this.view.apply(snapshot);
          setTimeout(() => this.connect(), 250);
        })
        .catch(() => setTimeout(() => this.connect(), 1000));
    };
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}
