/** Entry point: ?session=<id>&name=<display name>&server=<ws url>. */

import { SwarmChatClient } from "./client.js";
import { render, UiElements } from "./ui.js";

function grab<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function main(): void {
  const params = new URLSearchParams(window.location.search);
  const session = params.get("session") ?? "";
  const name = params.get("name") ?? `guest-${Math.floor(Math.random() * 1000)}`;
  const server =
    params.get("server") ?? `ws://${window.location.hostname}:8765`;

  const el: UiElements = {
    status: grab("status"),
    question: grab("question"),
    countdown: grab("countdown"),
    roster: grab("roster"),
    messages: grab("messages"),
    input: grab<HTMLInputElement>("input"),
    sendButton: grab<HTMLButtonElement>("send"),
    answerInput: grab<HTMLInputElement>("answer-input"),
    answerButton: grab<HTMLButtonElement>("answer-send"),
    final: grab("final"),
  };

  const client = new SwarmChatClient(server, session, name, (view) =>
    render(view, el, Date.now()),
  );

  el.sendButton.addEventListener("click", () => {
    if (client.post(el.input.value)) el.input.value = "";
  });
  el.input.addEventListener("keydown", (event) => {
    if (event.key === "Enter" && client.post(el.input.value)) el.input.value = "";
  });
  el.answerButton.addEventListener("click", () => {
    if (client.submitAnswer(el.answerInput.value)) el.answerInput.value = "";
  });
  el.answerInput.addEventListener("keydown", (event) => {
    if (event.key === "Enter" && client.submitAnswer(el.answerInput.value)) {
      el.answerInput.value = "";
    }
  });

  // countdown repaint; state itself changes only on frames
  window.setInterval(() => render(client.view, el, Date.now()), 500);

  client.connect();
}

document.addEventListener("DOMContentLoaded", main);
