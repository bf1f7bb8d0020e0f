/** Typed client for the session service JSON API. */

export interface ModelInfo {
  id: string;
  T: number;
  image_shape: number[];
  checkpoint: string | null;
}

export interface ImageInfo {
  id: string;
  url: string;
  generation: number;
  parent_ids: string[] | null;
  lambda: number | null;
}

export interface Population {
  session_id: string;
  model_id: string;
  generation: number;
  t_interp: number;
  s: number;
  T: number;
  N: number;
  images: ImageInfo[];
}

export interface HistoryEntry {
  generation: number;
  parent_a: string;
  parent_b: string;
  t_interp_used: number;
  lambdas: number[];
  individual_ids: string[];
}

export interface CreateSessionParams {
  model_id: string;
  N?: number;
  t_interp0?: number;
  s?: number;
  seed?: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const res = await fetch(url, init);
  if (!res.ok) {
    let code = "http_error";
    let message = `${res.status} ${res.statusText}`;
    try {
      const body = await res.json();
      if (body && typeof body.code === "string") {
        code = body.code;
        message = body.message ?? message;
      }
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(res.status, code, message);
  }
  return (await res.json()) as T;
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  resolve(path: string): string {
    return this.baseUrl + path;
  }

  async listModels(): Promise<ModelInfo[]> {
    const body = await request<{ models: ModelInfo[] }>(this.resolve("/api/models"));
    return body.models;
  }

  createSession(params: CreateSessionParams): Promise<Population> {
    return request<Population>(this.resolve("/api/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(params),
    });
  }

  getPopulation(sessionId: string): Promise<Population> {
    return request<Population>(this.resolve(`/api/sessions/${sessionId}/population`));
  }

  select(sessionId: string, parentA: string, parentB: string): Promise<Population> {
    return request<Population>(this.resolve(`/api/sessions/${sessionId}/select`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ parent_a: parentA, parent_b: parentB }),
    });
  }

  async getHistory(sessionId: string): Promise<HistoryEntry[]> {
    const body = await request<{ history: HistoryEntry[] }>(
      this.resolve(`/api/sessions/${sessionId}/history`),
    );
    return body.history;
  }

  async getRunLog(sessionId: string): Promise<string> {
    const res = await fetch(this.resolve(`/api/sessions/${sessionId}/log`));
    if (!res.ok) {
      throw new ApiError(res.status, "http_error", `${res.status} ${res.statusText}`);
    }
    return res.text();
  }
}
