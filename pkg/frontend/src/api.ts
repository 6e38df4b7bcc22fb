import type { Category, DecisionInfo, PairView, Progress } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

/** 409: someone already decided this flag; carries their decision. */
export class ConflictError extends ApiError {
  constructor(
    message: string,
    public existing: DecisionInfo,
  ) {
    super(409, message);
  }
}

async function parseJson(resp: Response): Promise<any> {
  try {
    return await resp.json();
  } catch {
    return {};
  }
}

export class ApiClient {
  constructor(private base: string = "") {}

  private async get(path: string): Promise<any> {
    const resp = await fetch(this.base + path);
    const body = await parseJson(resp);
    if (!resp.ok) {
      throw new ApiError(resp.status, body.error ?? `GET ${path} failed (${resp.status})`);
    }
    return body;
  }

  queue(status: "pending" | "decided" | "all" = "pending"): Promise<PairView[]> {
    return this.get(`/api/queue?status=${status}`);
  }

  flag(flagId: string): Promise<PairView> {
    return this.get(`/api/flags/${encodeURIComponent(flagId)}`);
  }

  progress(): Promise<Progress> {
    return this.get("/api/progress");
  }

  report(): Promise<{ per_source: Record<string, number>; total: number }> {
    return this.get("/api/report");
  }

  async decide(flagId: string, category: Category, reviewer: string, note?: string): Promise<DecisionInfo> {
    const resp = await fetch(this.base + "/api/decisions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ flag_id: flagId, category, reviewer, ...(note ? { note } : {}) }),
    });
    const body = await parseJson(resp);
    if (resp.status === 409) {
      throw new ConflictError(body.error ?? "already decided", body.existing as DecisionInfo);
    }
    if (!resp.ok) {
      throw new ApiError(resp.status, body.error ?? `decision failed (${resp.status})`);
    }
    return body as DecisionInfo;
  }
}
