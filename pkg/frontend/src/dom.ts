// Thin DOM render layer over the controller state.

import type { ControllerState, UiTurn } from "./chat.js";

export interface ViewHandles {
  log: HTMLElement;
  input: HTMLInputElement;
  sendButton: HTMLButtonElement;
  errorBox: HTMLElement;
}

function renderTurnElement(turn: UiTurn, onChipClick: (name: string) => void): HTMLElement {
  const row = document.createElement("div");
  row.className = `turn turn-${turn.role}`;

  const bubble = document.createElement("div");
  bubble.className = "bubble";
  if (turn.segments) {
    for (const seg of turn.segments) {
      if (seg.kind === "chip") {
        const chip = document.createElement("button");
        chip.className = "chip";
        chip.textContent = seg.text;
        chip.dataset.itemId = seg.itemId;
        chip.title = seg.name;
        bubble.appendChild(chip);
      } else {
        bubble.appendChild(document.createTextNode(seg.text));
      }
    }
  } else {
    bubble.textContent = turn.text;
  }
  row.appendChild(bubble);

  if (turn.panel && turn.panel.length > 0) {
    const panel = document.createElement("ol");
    panel.className = "panel";
    for (const entry of turn.panel) {
      const li = document.createElement("li");
      const btn = document.createElement("button");
      btn.className = "alt";
      btn.textContent = `${entry.name} (${(entry.prob * 100).toFixed(1)}%)`;
      btn.addEventListener("click", () => onChipClick(entry.name));
      li.appendChild(btn);
      panel.appendChild(li);
    }
    row.appendChild(panel);
  }
  return row;
}

export function render(
  state: ControllerState,
  handles: ViewHandles,
  onChipClick: (name: string) => void,
): void {
  handles.log.replaceChildren(
    ...state.turns.map((turn) => renderTurnElement(turn, onChipClick)),
  );
  handles.sendButton.disabled = state.busy || handles.input.value.trim() === "";
  handles.input.disabled = state.busy;
  handles.errorBox.textContent = state.error ?? "";
  handles.errorBox.hidden = state.error === null;
  handles.log.scrollTop = handles.log.scrollHeight;
}
