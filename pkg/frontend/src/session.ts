/** Rater session loop: fetch pair, submit judgment, advance.
 *
 * All progress and done-state come from the server, so a reload resumes
 * exactly where the rater left off. The only client-side state beyond the
 * current form is the in-flight idempotency token: it is minted once per
 * judgment and reused across network retries, never across judgments.
 */

import { ValidationError } from "./api.js";
import type { RetryOptions } from "./api.js";
import type { FormSnapshot } from "./form.js";
import type { NextResponse, SessionState, SubmitAck, SubmitBody, WirePair } from "./types.js";

/** The slice of the HTTP client a session needs; ApiClient satisfies it. */
export interface RatingApi {
  nextItem(taskId: string, raterId: string): Promise<NextResponse>;
  submitWithRetry(taskId: string, body: SubmitBody, options?: RetryOptions): Promise<SubmitAck>;
}

export type TokenGenerator = () => string;

const defaultTokenGenerator: TokenGenerator = () =>
  globalThis.crypto?.randomUUID?.() ?? `tok-${Date.now()}-${Math.random().toString(36).slice(2)}`;

export class RaterSession {
  readonly state: SessionState;
  private pendingToken: string | null = null;

  constructor(
    private readonly api: RatingApi,
    taskId: string,
    raterId: string,
    private readonly nextToken: TokenGenerator = defaultTokenGenerator,
  ) {
    this.state = {
      taskId,
      raterId,
      current: null,
      done: false,
      progress: { judged: 0, total: 0 },
      error: null,
    };
  }

  /** Fetch the current pair (or done) from the server. */
  async refresh(): Promise<SessionState> {
    const next = await this.api.nextItem(this.state.taskId, this.state.raterId);
    this.state.progress = next.progress;
    if (next.done) {
      this.state.done = true;
      this.state.current = null;
    } else {
      this.state.done = false;
      this.state.current = next as WirePair;
    }
    return this.state;
  }

  /**
   * Submit the completed form for the current pair, then advance.
   *
   * Transport failures are retried inside the client with the same token.
   * A server validation error leaves the pair and form untouched for the
   * caller (the message lands in state.error) after re-syncing with the
   * server, so a stale pair is replaced but input is not silently lost.
   */
  async submitAndAdvance(form: FormSnapshot): Promise<SessionState> {
    const pair = this.state.current;
    if (pair === null) {
      throw new Error("no pair is currently presented");
    }
    if (form.scoreLeft === null || form.scoreRight === null || form.verdict === null) {
      throw new Error("form is incomplete");
    }
    this.pendingToken = this.pendingToken ?? this.nextToken();
    try {
      const ack: SubmitAck = await this.api.submitWithRetry(this.state.taskId, {
        rater_id: this.state.raterId,
        pair_id: pair.pair_id,
        score_left: form.scoreLeft,
        score_right: form.scoreRight,
        verdict: form.verdict,
        token: this.pendingToken,
      });
      this.pendingToken = null;
      this.state.error = null;
      this.state.progress = ack.progress;
    } catch (err) {
      if (err instanceof ValidationError) {
        this.pendingToken = null;
        this.state.error = err.message;
        await this.refresh(); // the server's view wins; fetch a fresh pair
        return this.state;
      }
      throw err; // network failure beyond the retry budget: token is kept
    }
    return this.refresh();
  }
}
