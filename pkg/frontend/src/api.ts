/** HTTP client for the rating service, with retry-safe submission. */

import type {
  GsbReport,
  NextResponse,
  SubmitAck,
  SubmitBody,
  TaskPairInput,
} from "./types.js";

/** The server rejected the request (4xx): the input is wrong, do not retry. */
export class ValidationError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "ValidationError";
  }
}

/** Transport-level failure: safe to retry with the same idempotency token. */
export class NetworkError extends Error {
  constructor(message: string, readonly cause?: unknown) {
    super(message);
    this.name = "NetworkError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

export interface RetryOptions {
  retries: number;
  delayMs: number;
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (cause) {
      throw new NetworkError(`request to ${path} failed`, cause);
    }
    let body: unknown;
    try {
      body = await response.json();
    } catch (cause) {
      throw new NetworkError(`non-JSON response from ${path}`, cause);
    }
    if (!response.ok) {
      const message =
        typeof body === "object" && body !== null && "error" in body
          ? String((body as { error: unknown }).error)
          : `HTTP ${response.status}`;
      if (response.status >= 400 && response.status < 500) {
        throw new ValidationError(message, response.status);
      }
      throw new NetworkError(message);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  createTask(
    pairs: TaskPairInput[],
    raters: string[],
    goldFraction = 0,
    seed = 0,
  ): Promise<{ task_id: string }> {
    return this.post("/tasks", {
      pairs,
      raters,
      gold_fraction: goldFraction,
      seed,
    });
  }

  nextItem(taskId: string, raterId: string): Promise<NextResponse> {
    return this.request(`/tasks/${taskId}/next?rater=${encodeURIComponent(raterId)}`);
  }

  submitJudgment(taskId: string, body: SubmitBody): Promise<SubmitAck> {
    return this.post(`/tasks/${taskId}/judgments`, body);
  }

  /**
   * Submit with automatic retry on transport failures only. The caller's
   * idempotency token rides along unchanged, so a judgment that reached the
   * server before the connection dropped is acknowledged, not duplicated.
   */
  async submitWithRetry(
    taskId: string,
    body: SubmitBody,
    { retries, delayMs }: RetryOptions = { retries: 3, delayMs: 200 },
  ): Promise<SubmitAck> {
    let lastError: NetworkError | null = null;
    for (let attempt = 0; attempt <= retries; attempt++) {
      try {
        return await this.submitJudgment(taskId, body);
      } catch (err) {
        if (err instanceof NetworkError) {
          lastError = err;
          if (attempt < retries) await sleep(delayMs);
          continue;
        }
        throw err;
      }
    }
    throw lastError ?? new NetworkError("submit failed");
  }

  report(taskId: string): Promise<GsbReport> {
    return this.request(`/tasks/${taskId}/report`);
  }
}
