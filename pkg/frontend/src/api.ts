// Thin typed client for the rating service. Every response body passes
// through one JSON path so tests can audit exactly what the client saw.

import type { FlagsAck, NextPayload, RatingsAck, StagedFlag } from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  /** Raw JSON text of every payload consumed, for blinding audits. */
  readonly consumed: string[] = [];

  constructor(
    private readonly baseUrl: string,
    private readonly listener: string,
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    const text = await response.text();
    if (!response.ok) {
      let detail = text;
      try {
        detail = JSON.parse(text).detail ?? text;
      } catch {
        // non-JSON error body; keep the raw text
      }
      throw new ApiError(response.status, detail);
    }
    this.consumed.push(text);
    return JSON.parse(text) as T;
  }

  nextScreen(): Promise<NextPayload> {
    return this.request<NextPayload>(`/api/session/${this.listener}/next`);
  }

  submitRatings(screenId: number, scores: Record<string, number>): Promise<RatingsAck> {
    return this.request<RatingsAck>(`/api/session/${this.listener}/ratings`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ screen_id: screenId, scores }),
    });
  }

  submitFlags(screenId: number, flags: StagedFlag[]): Promise<FlagsAck> {
    return this.request<FlagsAck>(`/api/session/${this.listener}/flags`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ screen_id: screenId, flags }),
    });
  }

  audioUrl(relative: string): string {
    return this.baseUrl + relative;
  }
}
