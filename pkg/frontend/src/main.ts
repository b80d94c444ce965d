/** Bootstrap: read config, wire keyboard, run the session loop. */

import { ApiClient } from "./api.js";
import { JudgmentForm } from "./form.js";
import { RaterSession } from "./session.js";
import { ConsoleView } from "./view.js";

function config(): { server: string; taskId: string; raterId: string } | null {
  const params = new URLSearchParams(window.location.search);
  const server = params.get("server");
  const taskId = params.get("task");
  const raterId = params.get("rater");
  if (!server || !taskId || !raterId) return null;
  return { server: server.replace(/\/$/, ""), taskId, raterId };
}

function renderConnectForm(root: HTMLElement): void {
  root.innerHTML = `
    <form class="connect">
      <label>Server <input name="server" placeholder="http://127.0.0.1:8302" required></label>
      <label>Task <input name="task" placeholder="task-0001" required></label>
      <label>Rater <input name="rater" placeholder="your id" required></label>
      <button type="submit">Start rating</button>
    </form>`;
  root.querySelector("form")!.addEventListener("submit", (event) => {
    event.preventDefault();
    const data = new FormData(event.target as HTMLFormElement);
    const query = new URLSearchParams({
      server: String(data.get("server")),
      task: String(data.get("task")),
      rater: String(data.get("rater")),
    });
    window.location.search = query.toString();
  });
}

async function run(root: HTMLElement): Promise<void> {
  const cfg = config();
  if (!cfg) {
    renderConnectForm(root);
    return;
  }
  const api = new ApiClient(cfg.server);
  const session = new RaterSession(api, cfg.taskId, cfg.raterId);
  const form = new JudgmentForm();

  const submit = async () => {
    try {
      const state = await session.submitAndAdvance(form.snapshot());
      if (state.done) view.renderDone(state);
      else view.renderPair(state);
    } catch (err) {
      view.renderError(err instanceof Error ? err.message : String(err));
    }
  };

  const view = new ConsoleView(root, form, { onSubmit: submit });

  document.addEventListener("keydown", (event) => {
    if ((event.target as HTMLElement)?.tagName === "INPUT") return;
    // Shift+digit produces symbols in event.key; recover the digit from code
    const key = /^Digit[1-5]$/.test(event.code) ? event.code.slice(5) : event.key;
    const action = form.applyKey(key, event.shiftKey);
    if (action === "submit") void submit();
    else if (action === "changed") view.sync();
  });

  try {
    const state = await session.refresh();
    if (state.done) view.renderDone(state);
    else view.renderPair(state);
  } catch (err) {
    view.renderError(err instanceof Error ? err.message : String(err));
  }
}

document.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("app");
  if (root) void run(root);
});
