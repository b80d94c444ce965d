/** Wire types mirroring the rating service endpoints. */

export type Verdict = "left_better" | "same" | "right_better";

export interface Progress {
  judged: number;
  total: number;
}

/** A blinded pair as served to the rater: captions only, no provenance. */
export interface WirePair {
  pair_id: string;
  image_ref: string;
  caption_left: string;
  caption_right: string;
  done: false;
  progress: Progress;
}

export interface DoneMessage {
  done: true;
  progress: Progress;
}

export type NextResponse = WirePair | DoneMessage;

export interface SubmitBody {
  rater_id: string;
  pair_id: string;
  score_left: number;
  score_right: number;
  verdict: Verdict;
  token: string;
}

export interface SubmitAck {
  ok: boolean;
  duplicate: boolean;
  progress: Progress;
}

export interface TaskPairInput {
  pair_id: string;
  image_ref: string;
  caption_left: string;
  caption_right: string;
  source_left?: string;
  source_right?: string;
  expected_verdict?: "G" | "S" | "B" | null;
}

export interface GsbReport {
  task_id: string;
  gsb: {
    win_rate: number;
    tie_rate: number;
    loss_rate: number;
    win_plus_tie: number;
    total: number;
  };
  gold?: {
    accuracy: number;
    passed: boolean;
    matched: number;
    total: number;
    threshold: number;
  };
  per_rater: Record<string, { judged: number; gold_accuracy?: number; flagged?: boolean }>;
}

export interface SessionState {
  taskId: string;
  raterId: string;
  current: WirePair | null;
  done: boolean;
  progress: Progress;
  /** inline validation message from the server, if the last submit bounced */
  error: string | null;
}
