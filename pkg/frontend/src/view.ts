/** DOM rendering for the rating console. Browser-only module. */

import { JudgmentForm } from "./form.js";
import type { SessionState, Verdict, WirePair } from "./types.js";

export interface ViewCallbacks {
  onSubmit: () => void;
}

const SCORE_LABELS = ["1", "2", "3", "4", "5"];
const VERDICT_LABELS: Array<[Verdict, string, string]> = [
  ["left_better", "Left better", "G"],
  ["same", "Same", "S"],
  ["right_better", "Right better", "B"],
];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

export class ConsoleView {
  private form: JudgmentForm;

  constructor(
    private readonly root: HTMLElement,
    form: JudgmentForm,
    private readonly callbacks: ViewCallbacks,
  ) {
    this.form = form;
  }

  renderDone(state: SessionState): void {
    this.root.replaceChildren(
      el("h2", "done", "All pairs judged"),
      el("p", "progress", `Progress: ${state.progress.judged}/${state.progress.total}`),
    );
  }

  renderError(message: string): void {
    let banner = this.root.querySelector<HTMLElement>(".error-banner");
    if (!banner) {
      banner = el("div", "error-banner");
      this.root.prepend(banner);
    }
    banner.textContent = message;
  }

  renderPair(state: SessionState): void {
    const pair = state.current as WirePair;
    this.form.reset();
    const container = el("div", "pair");

    container.append(this.buildImage(pair));

    const panels = el("div", "panels");
    panels.append(
      this.buildPanel("left", pair.caption_left),
      this.buildPanel("right", pair.caption_right),
    );
    container.append(panels);

    const verdictRow = el("div", "verdicts");
    for (const [verdict, label, key] of VERDICT_LABELS) {
      const button = el("button", "verdict", `${label} (${key})`);
      button.dataset.verdict = verdict;
      button.addEventListener("click", () => {
        this.form.setVerdict(verdict);
        this.sync();
      });
      verdictRow.append(button);
    }
    container.append(verdictRow);

    const submit = el("button", "submit", "Submit (Enter)");
    submit.disabled = true;
    submit.addEventListener("click", () => {
      if (this.form.isComplete()) this.callbacks.onSubmit();
    });
    container.append(submit);

    container.append(
      el("p", "progress", `Progress: ${state.progress.judged}/${state.progress.total}`),
      el(
        "p",
        "hint",
        "Keys: 1-5 left score, Shift+1-5 right score, G/S/B verdict, Enter submit",
      ),
    );
    this.root.replaceChildren(container);
    if (state.error) this.renderError(state.error);
  }

  private buildImage(pair: WirePair): HTMLElement {
    const frame = el("div", "image-frame");
    const img = el("img", "subject");
    img.src = pair.image_ref;
    img.alt = "image under evaluation";
    img.addEventListener("error", () => {
      // captions stay usable; the rater can retry the image fetch
      const placeholder = el("div", "image-placeholder", "image failed to load");
      const retry = el("button", "retry", "Retry image");
      retry.addEventListener("click", () => {
        frame.replaceChildren(this.buildImage(pair));
      });
      placeholder.append(retry);
      frame.replaceChildren(placeholder);
    });
    frame.append(img);
    return frame;
  }

  private buildPanel(side: "left" | "right", caption: string): HTMLElement {
    const panel = el("div", `panel panel-${side}`);
    panel.append(el("p", "caption", caption));
    const scores = el("div", "scores");
    SCORE_LABELS.forEach((label, i) => {
      const button = el("button", "score", label);
      button.dataset.side = side;
      button.dataset.score = String(i + 1);
      button.addEventListener("click", () => {
        this.form.setScore(side, i + 1);
        this.sync();
      });
      scores.append(button);
    });
    panel.append(scores);
    return panel;
  }

  /** Reflect form state into the DOM: selected buttons and submit gating. */
  sync(): void {
    const snapshot = this.form.snapshot();
    for (const button of this.root.querySelectorAll<HTMLButtonElement>("button.score")) {
      const selected =
        (button.dataset.side === "left" && Number(button.dataset.score) === snapshot.scoreLeft) ||
        (button.dataset.side === "right" && Number(button.dataset.score) === snapshot.scoreRight);
      button.classList.toggle("selected", selected);
    }
    for (const button of this.root.querySelectorAll<HTMLButtonElement>("button.verdict")) {
      button.classList.toggle("selected", button.dataset.verdict === snapshot.verdict);
    }
    const submit = this.root.querySelector<HTMLButtonElement>("button.submit");
    if (submit) submit.disabled = !this.form.isComplete();
  }
}
