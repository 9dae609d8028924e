/** Typed HTTP client for the inference service. */

import type {
  ClassInfo,
  FeedbackAck,
  FeedbackPayload,
  HealthInfo,
  PredictionResponse,
} from "./types";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

/** A blob plus the filename the server should see in the multipart form. */
export interface NamedBlob {
  blob: Blob;
  name: string;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly fetchFn: FetchLike;

  constructor(
    private readonly baseUrl: string = "",
    fetchFn?: FetchLike,
  ) {
    // wrap the global so the call keeps its own receiver in browsers
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail = `HTTP ${response.status}`;
      try {
        const body: unknown = await response.json();
        if (
          typeof body === "object" &&
          body !== null &&
          typeof (body as { detail?: unknown }).detail === "string"
        ) {
          detail = (body as { detail: string }).detail;
        }
      } catch {
        // error body was not JSON; keep the status line
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>("/health");
  }

  classes(): Promise<ClassInfo[]> {
    return this.request<ClassInfo[]>("/classes");
  }

  predict(files: readonly NamedBlob[]): Promise<PredictionResponse[]> {
    const form = new FormData();
    for (const file of files) {
      form.append("files", file.blob, file.name);
    }
    return this.request<PredictionResponse[]>("/predict", {
      method: "POST",
      body: form,
    });
  }

  feedback(payload: FeedbackPayload): Promise<FeedbackAck> {
    return this.request<FeedbackAck>("/feedback", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }
}
