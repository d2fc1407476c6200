/**
 * Event-stream handling: one persistent socket per session, ordered frames,
 * reconnect with snapshot restore.
 *
 * The server guarantees that subscribing returns a snapshot atomically with
 * the event fan-out (no gap, no duplicates beyond the snapshot).  The client
 * therefore treats every snapshot as a full state replacement and checks
 * sequence numbers only to detect gaps within a connection; a gap forces a
 * reconnect rather than any patch-up attempt.
 */

import { parseEvent, type Snapshot, type StreamEvent } from "./protocol.js";

export type ConnState = "connecting" | "live" | "stale";

/** Minimal WebSocket surface so tests and node can inject their own. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface StreamHandlers {
  onSnapshot(snap: Snapshot): void;
  onEvent(ev: StreamEvent): void;
  onState(state: ConnState): void;
}

const RECONNECT_BASE_MS = 250;
const RECONNECT_MAX_MS = 5000;

export class SessionStream {
  private socket: SocketLike | null = null;
  private lastSeq = -1;
  private attempts = 0;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private handlers: StreamHandlers,
    private makeSocket: SocketFactory,
  ) {}

  connect(): void {
    if (this.closed) return;
    this.handlers.onState(this.attempts === 0 ? "connecting" : "stale");
    const sock = this.makeSocket(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.attempts = 0;
    };
    sock.onmessage = (ev) => this.handleFrame(String(ev.data));
    sock.onerror = () => {
      // the close handler owns reconnection; nothing to do here
    };
    sock.onclose = () => {
      if (this.socket !== sock) return; // superseded by a newer connection
      this.socket = null;
      if (!this.closed) this.scheduleReconnect();
    };
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.socket?.close();
    this.socket = null;
  }

  private scheduleReconnect(): void {
    this.handlers.onState("stale");
    const delay = Math.min(
      RECONNECT_MAX_MS,
      RECONNECT_BASE_MS * 2 ** this.attempts,
    );
    this.attempts += 1;
    this.timer = setTimeout(() => this.connect(), delay);
  }

  private handleFrame(text: string): void {
    let event: StreamEvent;
    try {
      event = parseEvent(text);
    } catch {
      this.forceReconnect();
      return;
    }
    if (event.type === "snapshot") {
      // full state replacement: history before the snapshot is irrelevant
      this.lastSeq = event.seq;
      this.handlers.onSnapshot(event);
      this.handlers.onState("live");
      return;
    }
    if (this.lastSeq >= 0 && event.seq !== this.lastSeq + 1) {
      this.forceReconnect(); // gap: the snapshot contract was broken
      return;
    }
    this.lastSeq = event.seq;
    this.handlers.onEvent(event);
  }

  private forceReconnect(): void {
    const sock = this.socket;
    this.socket = null;
    sock?.close();
    if (!this.closed) this.scheduleReconnect();
  }
}
