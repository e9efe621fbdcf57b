// The one place the UI talks to the platform; every mutation goes through the
// documented HTTP endpoints, nothing else.

import type { Answers, LeaseResponse, QAFeedback, WinnerChoice } from "./types.js";

export interface ApiOptions {
  baseUrl?: string;
  principal?: string;
  role?: string;
  fetchImpl?: typeof fetch;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    detail: string,
  ) {
    super(detail);
  }
}

export class MiloApi {
  private baseUrl: string;
  private headers: Record<string, string>;
  private fetchImpl: typeof fetch;

  constructor(options: ApiOptions = {}) {
    this.baseUrl = options.baseUrl ?? "";
    this.headers = {
      "Content-Type": "application/json",
      "X-Principal": options.principal ?? "dev",
      "X-Role": options.role ?? "annotator",
    };
    this.fetchImpl = options.fetchImpl ?? fetch.bind(globalThis);
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers: this.headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      throw new ApiError(resp.status, payload.error ?? "Error", payload.detail ?? resp.statusText);
    }
    return payload as T;
  }

  lease(queueId: string, annotatorId: string): Promise<LeaseResponse> {
    return this.request("POST", `/queues/${queueId}/lease`, { annotator_id: annotatorId });
  }

  submit(jobId: string, annotatorId: string, answers: Answers) {
    return this.request<{ annotation: { id: string; status: string } }>(
      "POST",
      `/jobs/${jobId}/submit`,
      { annotator_id: annotatorId, answers },
    );
  }

  reject(jobId: string, annotatorId: string, reason: string) {
    return this.request("POST", `/jobs/${jobId}/reject`, {
      annotator_id: annotatorId,
      reason,
    });
  }

  assist(annotationId: string, query: string): Promise<{ draft: string }> {
    return this.request("POST", `/annotations/${annotationId}/assist`, { query });
  }

  judge(annotationId: string): Promise<{ feedback: QAFeedback }> {
    return this.request("POST", `/annotations/${annotationId}/judge`, {});
  }

  submitQa(annotationId: string, grades: { criterion: string; level: string; explanation: string }[]) {
    return this.request<{ feedback: QAFeedback }>("POST", `/annotations/${annotationId}/qa`, {
      criterion_grades: grades,
    });
  }

  annotation(annotationId: string) {
    return this.request<{ annotation: unknown; feedback: QAFeedback[] }>(
      "GET",
      `/annotations/${annotationId}`,
    );
  }

  annotatorFeedback(annotatorId: string) {
    return this.request<{ feedback: { annotation_id: string; feedback: QAFeedback }[] }>(
      "GET",
      `/annotators/${annotatorId}/feedback`,
    );
  }

  recordComparison(payload: {
    project_id: string;
    category: string;
    responses: Record<string, string>;
    winners: Record<string, WinnerChoice>;
    criteria?: Record<string, string[]>;
  }) {
    return this.request("POST", "/comparisons", payload);
  }
}
