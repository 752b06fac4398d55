/**
 * Wire frames, mirroring the server protocol exactly: one JSON object per
 * frame, canonical encoding (sorted keys, compact separators) so encodings
 * are byte-identical on both sides of the socket.
 */

export type ParticipantKind = "human" | "bot" | "agent";

export interface RosterEntry {
  id: string;
  name: string;
  kind: ParticipantKind;
}

export interface JoinFrame {
  type: "join";
  session: string;
  name: string;
}

export interface PostFrame {
  type: "post";
  text: string;
}

export interface AnswerFrame {
  type: "answer";
  text: string;
}

export interface AssignedFrame {
  type: "assigned";
  room: number;
  members: RosterEntry[];
}

export interface QuestionFrame {
  type: "question";
  text: string;
  deadline_ms: number;
}

export interface MessageFrame {
  type: "message";
  room: number;
  seq: number;
  author: string;
  author_kind: ParticipantKind;
  text: string;
  relayed_from: number | null;
}

export interface ClosedFrame {
  type: "closed";
  final: string | null;
}

export type ClientFrame = JoinFrame | PostFrame | AnswerFrame;
export type ServerFrame = AssignedFrame | QuestionFrame | MessageFrame | ClosedFrame;
export type Frame = ClientFrame | ServerFrame;

export class FrameError extends Error {}

const KINDS: ParticipantKind[] = ["human", "bot", "agent"];

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function str(body: Record<string, unknown>, field: string): string {
  const value = body[field];
  if (typeof value !== "string") throw new FrameError(`field ${field} must be a string`);
  return value;
}

function int(body: Record<string, unknown>, field: string): number {
  const value = body[field];
  if (typeof value !== "number" || !Number.isInteger(value)) {
    throw new FrameError(`field ${field} must be an integer`);
  }
  return value;
}

function kind(body: Record<string, unknown>, field: string): ParticipantKind {
  const value = str(body, field);
  if (!KINDS.includes(value as ParticipantKind)) {
    throw new FrameError(`unknown participant kind ${value}`);
  }
  return value as ParticipantKind;
}

function checkFields(body: Record<string, unknown>, allowed: string[]): void {
  for (const key of Object.keys(body)) {
    if (key !== "type" && !allowed.includes(key)) {
      throw new FrameError(`unexpected field ${key}`);
    }
  }
  for (const key of allowed) {
    if (!(key in body)) throw new FrameError(`missing field ${key}`);
  }
}

/** Strictly parse one frame of either direction. */
export function parseFrame(raw: string): Frame {
  let body: unknown;
  try {
    body = JSON.parse(raw);
  } catch (error) {
    throw new FrameError(`frame is not valid JSON: ${String(error)}`);
  }
  if (!isRecord(body)) throw new FrameError("frame must be a JSON object");
  switch (body.type) {
    case "join":
      checkFields(body, ["session", "name"]);
      return { type: "join", session: str(body, "session"), name: str(body, "name") };
    case "post":
      checkFields(body, ["text"]);
      return { type: "post", text: str(body, "text") };
    case "answer":
      checkFields(body, ["text"]);
      return { type: "answer", text: str(body, "text") };
    case "assigned": {
      checkFields(body, ["room", "members"]);
      const rawMembers = body.members;
      if (!Array.isArray(rawMembers)) throw new FrameError("members must be a list");
      const members = rawMembers.map((member): RosterEntry => {
        if (!isRecord(member)) throw new FrameError("members must be objects");
        checkFields(member, ["id", "name", "kind"]);
        return { id: str(member, "id"), name: str(member, "name"), kind: kind(member, "kind") };
      });
      return { type: "assigned", room: int(body, "room"), members };
    }
    case "question":
      checkFields(body, ["text", "deadline_ms"]);
      return {
        type: "question",
        text: str(body, "text"),
        deadline_ms: int(body, "deadline_ms"),
      };
    case "message": {
      checkFields(body, ["room", "seq", "author", "author_kind", "text", "relayed_from"]);
      const relayed = body.relayed_from;
      if (relayed !== null && (typeof relayed !== "number" || !Number.isInteger(relayed))) {
        throw new FrameError("relayed_from must be a room id or null");
      }
      return {
        type: "message",
        room: int(body, "room"),
        seq: int(body, "seq"),
        author: str(body, "author"),
        author_kind: kind(body, "author_kind"),
        text: str(body, "text"),
        relayed_from: relayed as number | null,
      };
    }
    case "closed": {
      checkFields(body, ["final"]);
      const final = body.final;
      if (final !== null && typeof final !== "string") {
        throw new FrameError("final must be text or null");
      }
      return { type: "closed", final: final as string | null };
    }
    default:
      throw new FrameError(`unknown frame type ${String(body.type)}`);
  }
}

export function parseServerFrame(raw: string): ServerFrame {
  const frame = parseFrame(raw);
  if (frame.type === "join" || frame.type === "post" || frame.type === "answer") {
    throw new FrameError(`unexpected client frame ${frame.type} from server`);
  }
  return frame;
}

function canonical(value: unknown): string {
  if (value === null) return "null";
  if (Array.isArray(value)) {
    return "[" + value.map(canonical).join(",") + "]";
  }
  if (typeof value === "object") {
    const record = value as Record<string, unknown>;
    const keys = Object.keys(record).sort();
    return "{" + keys.map((k) => JSON.stringify(k) + ":" + canonical(record[k])).join(",") + "}";
  }
  return JSON.stringify(value);
}

/** Canonical encoding: sorted keys, compact separators, raw unicode. */
export function encodeFrame(frame: Frame): string {
  return canonical(frame);
}
