/** Judgment form state: two 1-5 scores and a three-way verdict.
 *
 * Mouse clicks and keyboard shortcuts funnel through the same setters, so
 * the submitted payload is identical either way. Keys: 1-5 score the left
 * panel, Shift+1-5 the right panel, G/S/B pick the verdict, Enter submits.
 */

import type { SubmitBody, Verdict } from "./types.js";

export interface FormSnapshot {
  scoreLeft: number | null;
  scoreRight: number | null;
  verdict: Verdict | null;
}

const VERDICT_KEYS: Record<string, Verdict> = {
  g: "left_better",
  s: "same",
  b: "right_better",
};

export class JudgmentForm {
  scoreLeft: number | null = null;
  scoreRight: number | null = null;
  verdict: Verdict | null = null;

  reset(): void {
    this.scoreLeft = null;
    this.scoreRight = null;
    this.verdict = null;
  }

  setScore(panel: "left" | "right", score: number): void {
    if (!Number.isInteger(score) || score < 1 || score > 5) {
      throw new Error(`score must be an integer in 1..5, got ${score}`);
    }
    if (panel === "left") this.scoreLeft = score;
    else this.scoreRight = score;
  }

  setVerdict(verdict: Verdict): void {
    this.verdict = verdict;
  }

  /** True once both scores and a verdict are chosen; gates the submit button. */
  isComplete(): boolean {
    return this.scoreLeft !== null && this.scoreRight !== null && this.verdict !== null;
  }

  snapshot(): FormSnapshot {
    return { scoreLeft: this.scoreLeft, scoreRight: this.scoreRight, verdict: this.verdict };
  }

  /**
   * Apply one keyboard shortcut. Returns "submit" when Enter is pressed on a
   * complete form, "changed" when the key mutated state, "ignored" otherwise.
   */
  applyKey(key: string, shift = false): "submit" | "changed" | "ignored" {
    if (key === "Enter") {
      return this.isComplete() ? "submit" : "ignored";
    }
    if (key >= "1" && key <= "5") {
      this.setScore(shift ? "right" : "left", Number(key));
      return "changed";
    }
    const verdict = VERDICT_KEYS[key.toLowerCase()];
    if (verdict !== undefined && key.length === 1) {
      this.setVerdict(verdict);
      return "changed";
    }
    return "ignored";
  }

  toPayload(raterId: string, pairId: string, token: string): SubmitBody {
    if (!this.isComplete()) {
      throw new Error("form is incomplete");
    }
    return {
      rater_id: raterId,
      pair_id: pairId,
      score_left: this.scoreLeft as number,
      score_right: this.scoreRight as number,
      verdict: this.verdict as Verdict,
      token,
    };
  }
}
