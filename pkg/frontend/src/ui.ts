/**
 * DOM rendering.  Agent relays appear inline in the conversation like any
 * other member's message, but styled distinctly and badged with the group
 * they came from.
 */

import { ClientView, phaseAt, remainingMs, ViewMessage } from "./state.js";

export interface UiElements {
  status: HTMLElement;
  question: HTMLElement;
  countdown: HTMLElement;
  roster: HTMLElement;
  messages: HTMLElement;
  input: HTMLInputElement;
  sendButton: HTMLButtonElement;
  answerInput: HTMLInputElement;
  answerButton: HTMLButtonElement;
  final: HTMLElement;
}

function messageNode(message: ViewMessage): HTMLElement {
  const item = document.createElement("div");
  item.className = message.relayedFrom !== null ? "msg agent" : "msg";
  const author = document.createElement("span");
  author.className = "author";
  author.textContent = message.author;
  item.appendChild(author);
  if (message.relayedFrom !== null) {
    const badge = document.createElement("span");
    badge.className = "badge";
    badge.textContent = `from another group (room ${message.relayedFrom})`;
    item.appendChild(badge);
  }
  const text = document.createElement("span");
  text.className = "text";
  text.textContent = message.text;
  item.appendChild(text);
  return item;
}

function formatCountdown(ms: number): string {
  const totalSeconds = Math.ceil(ms / 1000);
  const minutes = Math.floor(totalSeconds / 60);
  const seconds = totalSeconds % 60;
  return `${minutes}:${String(seconds).padStart(2, "0")}`;
}

const PHASE_LABEL: Record<string, string> = {
  connecting: "connecting…",
  lobby: "waiting for the session to start…",
  active: "discussion open",
  answering: "time! submit your final answer",
  closed: "session closed",
  error: "connection lost — reload to rejoin",
};

export function render(view: ClientView, el: UiElements, now: number): void {
  const phase = phaseAt(view, now);
  el.status.textContent = PHASE_LABEL[phase] ?? phase;
  el.status.dataset.phase = phase;
  el.question.textContent = view.question;

  const left = remainingMs(view, now);
  el.countdown.textContent = left === null || phase === "closed" ? "" : formatCountdown(left);

  el.roster.replaceChildren(
    ...view.roster.map((member) => {
      const chip = document.createElement("span");
      chip.className = `chip ${member.kind}`;
      chip.textContent = member.name;
      return chip;
    }),
  );

  // append only what's new; the list order is the server's seq order
  while (el.messages.childElementCount > view.messages.length) {
    el.messages.lastElementChild?.remove();
  }
  for (let i = el.messages.childElementCount; i < view.messages.length; i += 1) {
    const message = view.messages[i];
    if (message) el.messages.appendChild(messageNode(message));
  }
  el.messages.scrollTop = el.messages.scrollHeight;

  el.input.disabled = phase !== "active";
  el.sendButton.disabled = phase !== "active";
  el.answerInput.disabled = phase !== "answering";
  el.answerButton.disabled = phase !== "answering";

  if (phase === "closed") {
    el.final.textContent =
      view.finalAnswer === null
        ? "No final answer was reported."
        : `Final answer: ${view.finalAnswer}`;
  } else if (view.error) {
    el.final.textContent = view.error;
  }
}
