/**
 * WebSocket wiring: one connection, state updated only from received frames.
 * A dropped connection renders as a failure state; there is no silent retry
 * (rejoining is join-as-new, by reloading with the same URL parameters).
 */

import { encodeFrame, FrameError, parseServerFrame } from "./frames.js";
import {
  applyFrame,
  canAnswer,
  canPost,
  ClientView,
  connectionFailed,
  initialView,
  joined,
} from "./state.js";

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: string, listener: (event: any) => void): void;
}

export type SocketFactory = (url: string) => WebSocketLike;

export class SwarmChatClient {
  view: ClientView = initialView();

  private socket: WebSocketLike | null = null;

  constructor(
    private readonly url: string,
    private readonly session: string,
    private readonly name: string,
    private readonly onChange: (view: ClientView) => void,
    private readonly makeSocket: SocketFactory = (u) => new WebSocket(u) as WebSocketLike,
    private readonly clock: () => number = () => Date.now(),
  ) {}

  connect(): void {
    const socket = this.makeSocket(this.url);
    this.socket = socket;
    socket.addEventListener("open", () => {
      socket.send(encodeFrame({ type: "join", session: this.session, name: this.name }));
      this.update(joined(this.view));
    });
    socket.addEventListener("message", (event: { data: unknown }) => {
      let frame;
      try {
        frame = parseServerFrame(String(event.data));
      } catch (error) {
        if (error instanceof FrameError) return; // ignore undecodable frames
        throw error;
      }
      this.update(applyFrame(this.view, frame, this.clock()));
    });
    socket.addEventListener("close", () => {
      this.update(connectionFailed(this.view, "connection closed"));
    });
    socket.addEventListener("error", () => {
      this.update(connectionFailed(this.view, "connection error"));
    });
  }

  /** Send a chat message; blocked locally outside the active phase or empty. */
  post(text: string): boolean {
    if (!text.trim() || !this.socket || !canPost(this.view, this.clock())) return false;
    this.socket.send(encodeFrame({ type: "post", text }));
    return true;
  }

  /** Send the final answer; blocked locally outside the answering phase. */
  submitAnswer(text: string): boolean {
    if (!text.trim() || !this.socket || !canAnswer(this.view, this.clock())) return false;
    this.socket.send(encodeFrame({ type: "answer", text }));
    return true;
  }

  private update(view: ClientView): void {
    this.view = view;
    this.onChange(view);
  }
}
