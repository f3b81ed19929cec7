import { ApiClient } from "./api.js";
import { ChatStore } from "./state.js";
import { renderMessages, renderStatusBar } from "./render.js";

const DEFAULT_API_BASE = "http://127.0.0.1:8080";

function apiBase(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("api") ?? (window as any).SPECRAG_API_BASE ?? DEFAULT_API_BASE;
}

function main(): void {
  const api = new ApiClient(apiBase());
  const store = new ChatStore(api);

  const thread = document.getElementById("thread") as HTMLDivElement;
  const status = document.getElementById("status") as HTMLDivElement;
  const form = document.getElementById("composer") as HTMLFormElement;
  const input = document.getElementById("question") as HTMLInputElement;
  const send = document.getElementById("send") as HTMLButtonElement;
  const reset = document.getElementById("new-session") as HTMLButtonElement;

  store.subscribe((state) => {
    thread.innerHTML = renderMessages(state);
    status.innerHTML = renderStatusBar(state);
    input.disabled = state.busy;
    send.disabled = state.busy;
    thread.scrollTop = thread.scrollHeight;
  });

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const text = input.value;
    input.value = "";
    void store.sendQuery(text);
  });

  reset.addEventListener("click", () => {
    void store.newSession();
  });

  // Exclusion toggles are re-rendered each update; delegate from the thread.
  thread.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    if (target.classList.contains("exclude-toggle")) {
      const docId = target.dataset.docId;
      if (docId) store.toggleExclude(docId);
    }
  });

  void store.newSession();
}

main();
