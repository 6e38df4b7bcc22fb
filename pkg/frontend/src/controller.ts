import { ApiClient, ConflictError } from "./api.js";
import type { Category, DecisionInfo, PairView, Progress, QueueFilter } from "./types.js";

export type Banner =
  | { kind: "offline"; message: string; queued: number }
  | { kind: "conflict"; flagId: string; existing: DecisionInfo }
  | { kind: "committed"; flagId: string; category: Category }
  | { kind: "empty"; message: string };

interface QueuedSubmit {
  flagId: string;
  category: Category;
  note?: string;
}

/**
 * Queue state machine. Pairs and tallies always come verbatim from the
 * server; a decision is only marked committed after the server acknowledged
 * it (201) or reported an earlier one (409). Failed submissions are kept
 * locally and retried.
 */
export class QueueController {
  pairs: PairView[] = [];
  position = 0;
  progress: Progress | null = null;
  banner: Banner | null = null;
  filter: QueueFilter = { status: "pending" };
  loaded = false;

  private retryQueue: QueuedSubmit[] = [];
  private inFlight = new Set<string>();
  private listeners: Array<() => void> = [];

  constructor(
    private api: ApiClient,
    public reviewer: string = "reviewer",
  ) {}

  onChange(fn: () => void): void {
    this.listeners.push(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  get retryCount(): number {
    return this.retryQueue.length;
  }

  /** Reload the queue and tallies; on failure keep current data and banner a retry hint. */
  async load(filter?: QueueFilter): Promise<void> {
    if (filter) this.filter = { ...this.filter, ...filter };
    try {
      const [pairs, progress] = await Promise.all([
        this.api.queue(this.filter.status ?? "pending"),
        this.api.progress(),
      ]);
      let filtered = pairs;
      if (this.filter.benchmark) {
        filtered = filtered.filter((p) => p.benchmark === this.filter.benchmark);
      }
      if (this.filter.source) {
        filtered = filtered.filter((p) => p.train?.source === this.filter.source);
      }
      this.pairs = filtered;
      this.progress = progress;
      this.position = this.firstPendingFrom(0);
      this.loaded = true;
      if (this.pendingCount() === 0) {
        this.banner = { kind: "empty", message: "no pending flags" };
      } else if (this.banner?.kind === "empty" || this.banner?.kind === "offline") {
        this.banner = null;
      }
    } catch (err) {
      this.banner = {
        kind: "offline",
        message: `service unreachable: ${String(err)}`,
        queued: this.retryQueue.length,
      };
    }
    this.notify();
  }

  current(): PairView | null {
    return this.position >= 0 ? (this.pairs[this.position] ?? null) : null;
  }

  pendingCount(): number {
    return this.pairs.filter((p) => p.status === "pending").length;
  }

  private firstPendingFrom(start: number): number {
    for (let i = start; i < this.pairs.length; i++) {
      if (this.pairs[i]!.status === "pending") return i;
    }
    for (let i = 0; i < Math.min(start, this.pairs.length); i++) {
      if (this.pairs[i]!.status === "pending") return i;
    }
    return -1;
  }

  private advance(): void {
    this.position = this.firstPendingFrom(this.position + 1);
    if (this.position < 0) {
      this.banner = { kind: "empty", message: "no pending flags" };
    }
  }

  private markDecided(flagId: string, decision: DecisionInfo): void {
    const pair = this.pairs.find((p) => p.flag_id === flagId);
    if (pair) {
      pair.status = "decided";
      pair.decision = decision;
    }
  }

  private async refreshProgress(): Promise<void> {
    try {
      this.progress = await this.api.progress();
    } catch {
      // keep the last server-confirmed tallies; never invent numbers
    }
  }

  /** Decide the current pair; advances only after the server answers. */
  async decide(category: Category, note?: string): Promise<void> {
    const pair = this.current();
    if (!pair || pair.status !== "pending") return;
    await this.submit({ flagId: pair.flag_id, category, note });
  }

  private async submit(item: QueuedSubmit): Promise<void> {
    if (this.inFlight.has(item.flagId)) return; // no double submit
    this.inFlight.add(item.flagId);
    try {
      const decision = await this.api.decide(
        item.flagId,
        item.category,
        this.reviewer,
        item.note,
      );
      this.markDecided(item.flagId, decision);
      this.banner = { kind: "committed", flagId: item.flagId, category: item.category };
      this.advance();
      await this.refreshProgress();
    } catch (err) {
      if (err instanceof ConflictError) {
        this.markDecided(item.flagId, err.existing);
        this.banner = { kind: "conflict", flagId: item.flagId, existing: err.existing };
        this.advance();
        await this.refreshProgress();
      } else {
        // network failure: hold the decision locally and surface a retry banner
        if (!this.retryQueue.some((q) => q.flagId === item.flagId)) {
          this.retryQueue.push(item);
        }
        this.banner = {
          kind: "offline",
          message: "decision saved locally; will retry",
          queued: this.retryQueue.length,
        };
      }
    } finally {
      this.inFlight.delete(item.flagId);
    }
    this.notify();
  }

  /** Flush locally retained decisions (called on a timer and after reconnects). */
  async retryPending(): Promise<void> {
    const queued = this.retryQueue;
    this.retryQueue = [];
    for (const item of queued) {
      await this.submit(item);
    }
  }
}
