/**
 * Typed client for the mask-review HTTP API.
 *
 * The UI talks to the backend exclusively through these four endpoints;
 * everything else in the app is presentation.
 */

export interface ImageDetail {
  image_url: string;
  candidates: string[];
  meta: Record<string, unknown>;
}

export interface SelectionInput {
  candidate_index: number;
  annotator_id: string;
  elapsed_ms: number;
}

export interface SelectionRecord extends SelectionInput {
  image_id: string;
  timestamp: string;
}

/** Non-2xx response; `status` distinguishes rejection (4xx) from outage. */
export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
  }
}

/** What the session controller needs; ApiClient is the live implementation. */
export interface Api {
  queue(annotator: string): Promise<string[]>;
  imageDetail(imageId: string): Promise<ImageDetail>;
  submitSelection(imageId: string, body: SelectionInput): Promise<SelectionRecord>;
}

export class ApiClient implements Api {
  private readonly baseUrl: string;

  constructor(baseUrl = "") {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  url(path: string): string {
    return this.baseUrl + path;
  }

  private async checked(res: Response): Promise<Response> {
    if (!res.ok) {
      throw new ApiError(res.status, await res.text());
    }
    return res;
  }

  async queue(annotator: string): Promise<string[]> {
    const res = await this.checked(
      await fetch(this.url(`/api/queue?annotator=${encodeURIComponent(annotator)}`)),
    );
    return ((await res.json()) as { pending: string[] }).pending;
  }

  async imageDetail(imageId: string): Promise<ImageDetail> {
    const res = await this.checked(
      await fetch(this.url(`/api/images/${encodeURIComponent(imageId)}`)),
    );
    return (await res.json()) as ImageDetail;
  }

  async submitSelection(imageId: string, body: SelectionInput): Promise<SelectionRecord> {
    const res = await this.checked(
      await fetch(this.url(`/api/images/${encodeURIComponent(imageId)}/selection`), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
    return (await res.json()) as SelectionRecord;
  }

  exportUrl(): string {
    return this.url("/api/export");
  }
}
