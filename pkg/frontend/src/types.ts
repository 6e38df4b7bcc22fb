export type Category = "duplicate" | "gray-area" | "similar-but-different";

export const CATEGORIES: Category[] = ["duplicate", "gray-area", "similar-but-different"];

export interface TrainCard {
  instruction: string;
  output: string;
  source: string;
}

export interface TestCard {
  question: string;
  answer: string | null;
  benchmark: string;
}

export interface Suggestion {
  category: Category;
  rationale: string;
}

export interface DecisionInfo {
  category: Category;
  reviewer: string;
  timestamp: string;
  note: string | null;
}

/** One flagged train/test pair as served by GET /api/queue. */
export interface PairView {
  flag_id: string;
  train_id: string;
  benchmark: string;
  test_id: string;
  score: number;
  status: "pending" | "decided";
  train: TrainCard | null;
  test: TestCard | null;
  suggestion: Suggestion | null;
  decision: DecisionInfo | null;
}

/** Server-side tallies from GET /api/progress; never computed client-side. */
export interface Progress {
  pending: number;
  decided: number;
  per_category: Record<Category, number>;
}

export interface QueueFilter {
  status?: "pending" | "decided" | "all";
  benchmark?: string;
  source?: string;
}
