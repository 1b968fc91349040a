import { ApiClient } from "./api.js";
import { ChatController } from "./chat.js";
import { render, type ViewHandles } from "./dom.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://localhost:8080";

const handles: ViewHandles = {
  log: document.getElementById("log") as HTMLElement,
  input: document.getElementById("message") as HTMLInputElement,
  sendButton: document.getElementById("send") as HTMLButtonElement,
  errorBox: document.getElementById("error") as HTMLElement,
};

const client = new ApiClient(baseUrl);
const controller = new ChatController(client, {
  k: Number(params.get("k") ?? 5),
  onChange: (state) => render(state, handles, onAlternative),
});

function onAlternative(name: string): void {
  handles.input.value = controller.composeSeen(name);
  handles.input.focus();
  render(controller.getState(), handles, onAlternative);
}

async function submit(): Promise<void> {
  const message = handles.input.value;
  if (!controller.canSend(message)) {
    return;
  }
  handles.input.value = "";
  await controller.send(message);
}

handles.sendButton.addEventListener("click", () => void submit());
handles.input.addEventListener("keydown", (ev) => {
  if (ev.key === "Enter") {
    void submit();
  }
});
handles.input.addEventListener("input", () =>
  render(controller.getState(), handles, onAlternative),
);

client
  .health()
  .then((h) => {
    const badge = document.getElementById("health");
    if (badge) {
      badge.textContent = `service ${h.status} · ${h.checkpoint_hash.slice(0, 8)}`;
    }
  })
  .catch(() => {
    const badge = document.getElementById("health");
    if (badge) {
      badge.textContent = "service unreachable";
    }
  });

render(controller.getState(), handles, onAlternative);
