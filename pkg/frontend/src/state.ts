/**
 * Client view state, driven purely by server frames.
 *
 * The reducer owns every invariant the UI relies on: messages stay in the
 * server's order (never reordered client-side), frames for other rooms are
 * never displayed, agent relays keep their provenance so the renderer can
 * badge them, and the countdown derives from the server's deadline rather
 * than a local timer start.
 */

import { RosterEntry, ServerFrame } from "./frames.js";

export type Phase = "connecting" | "lobby" | "active" | "answering" | "closed" | "error";

export interface ViewMessage {
  room: number;
  seq: number;
  author: string;
  authorKind: "human" | "bot" | "agent";
  text: string;
  /** Source room of an agent relay; null for ordinary messages. */
  relayedFrom: number | null;
}

export interface ClientView {
  phase: Phase;
  roomId: number | null;
  roster: RosterEntry[];
  messages: ViewMessage[];
  question: string;
  /** Countdown duration announced by the server (ms), from question receipt. */
  deadlineMs: number | null;
  /** Local clock value when the question frame arrived. */
  questionReceivedAt: number | null;
  finalAnswer: string | null;
  error: string | null;
}

export function initialView(): ClientView {
  return {
    phase: "connecting",
    roomId: null,
    roster: [],
    messages: [],
    question: "",
    deadlineMs: null,
    questionReceivedAt: null,
    finalAnswer: null,
    error: null,
  };
}

export function joined(view: ClientView): ClientView {
  return { ...view, phase: "lobby" };
}

export function connectionFailed(view: ClientView, reason: string): ClientView {
  if (view.phase === "closed") return view;
  return { ...view, phase: "error", error: reason };
}

/** Apply one server frame.  `now` is the local clock (ms). */
export function applyFrame(view: ClientView, frame: ServerFrame, now: number): ClientView {
  switch (frame.type) {
    case "assigned":
      return { ...view, roomId: frame.room, roster: frame.members };
    case "question":
      return {
        ...view,
        phase: "active",
        question: frame.text,
        deadlineMs: frame.deadline_ms,
        questionReceivedAt: now,
      };
    case "message": {
      if (view.roomId === null || frame.room !== view.roomId) {
        return view; // never display another room's messages
      }
      const message: ViewMessage = {
        room: frame.room,
        seq: frame.seq,
        author: frame.author,
        authorKind: frame.author_kind,
        text: frame.text,
        relayedFrom: frame.relayed_from,
      };
      return { ...view, messages: [...view.messages, message] };
    }
    case "closed":
      return { ...view, phase: "closed", finalAnswer: frame.final };
  }
}

/** Milliseconds left on the server-announced deadline, never negative. */
export function remainingMs(view: ClientView, now: number): number | null {
  if (view.deadlineMs === null || view.questionReceivedAt === null) return null;
  return Math.max(0, view.deadlineMs - (now - view.questionReceivedAt));
}

/** Phase as of `now`: active flips to answering once the deadline passes. */
export function phaseAt(view: ClientView, now: number): Phase {
  if (view.phase !== "active") return view.phase;
  const left = remainingMs(view, now);
  return left !== null && left <= 0 ? "answering" : "active";
}

export function canPost(view: ClientView, now: number): boolean {
  return phaseAt(view, now) === "active";
}

export function canAnswer(view: ClientView, now: number): boolean {
  return phaseAt(view, now) === "answering";
}
