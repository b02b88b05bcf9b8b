/** Thin client for the summarization service; all model values come from it. */

import type {
  AbstractResult,
  AddDocumentResponse,
  ExtractResult,
  HealthResponse,
  MatrixResponse,
  SummarizeRequest,
} from "./types.js";

export class ServiceError extends Error {
  /** status 0 means the service was unreachable. */
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.base + path, init);
    } catch (err) {
      throw new ServiceError(0, "unreachable", String(err));
    }
    let body: unknown = null;
    try {
      body = await resp.json();
    } catch {
      // non-JSON body; fall through to the status check
    }
    if (!resp.ok) {
      const err = (body ?? {}) as { code?: string; message?: string };
      throw new ServiceError(
        resp.status,
        err.code ?? "error",
        err.message ?? `HTTP ${resp.status}`,
      );
    }
    return body as T;
  }

  health(): Promise<HealthResponse> {
    return this.request("/health");
  }

  addDocument(
    text: string,
    title?: string,
    summary?: string,
  ): Promise<AddDocumentResponse> {
    return this.request("/documents", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text, title, summary }),
    });
  }

  matrix(docId: string, epsN: number, epsR: number): Promise<MatrixResponse> {
    const params = new URLSearchParams({
      eps_n: String(epsN),
      eps_r: String(epsR),
    });
    return this.request(
      `/documents/${encodeURIComponent(docId)}/matrix?${params}`,
    );
  }

  summarizeExtract(req: SummarizeRequest): Promise<ExtractResult> {
    return this.request("/summarize", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ ...req, mode: "extract" }),
    });
  }

  summarizeAbstract(req: SummarizeRequest): Promise<AbstractResult> {
    return this.request("/summarize", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ ...req, mode: "abstract" }),
    });
  }
}
