import type { Answers, ItemStub, NextResponse, Report, SubmitResponse } from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public field?: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

type FetchLike = typeof fetch;

/**
 * Thin client over the annotation API. The shared token travels in the
 * X-Annotation-Token header; a 401 surfaces as ApiError('UNAUTHORIZED').
 */
export class ApiClient {
  constructor(
    private baseUrl: string = '',
    private token: string | null = null,
    private fetchImpl: FetchLike = fetch,
  ) {}

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { 'Content-Type': 'application/json' };
    if (this.token) {
      headers['X-Annotation-Token'] = this.token;
    }
    return headers;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      ...init,
      headers: { ...this.headers(), ...(init?.headers ?? {}) },
    });
    const body = (await response.json()) as Record<string, unknown>;
    if (!response.ok) {
      throw new ApiError(
        response.status,
        String(body.error ?? 'ERROR'),
        String(body.message ?? body.error ?? `HTTP ${response.status}`),
        body.field === undefined ? undefined : String(body.field),
      );
    }
    return body as T;
  }

  async items(): Promise<ItemStub[]> {
    const body = await this.request<{ items: ItemStub[] }>('/api/items');
    return body.items;
  }

  async next(annotatorId: string): Promise<NextResponse> {
    return this.request<NextResponse>(`/api/next?annotator=${encodeURIComponent(annotatorId)}`);
  }

  async submitLabel(taskId: string, annotatorId: string, answers: Answers): Promise<SubmitResponse> {
    return this.request<SubmitResponse>('/api/label', {
      method: 'POST',
      body: JSON.stringify({ task_id: taskId, annotator_id: annotatorId, answers }),
    });
  }

  async report(): Promise<Report> {
    return this.request<Report>('/api/report');
  }
}
