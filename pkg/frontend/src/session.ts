/**
 * Annotation session state machine, kept free of DOM concerns so the
 * interaction contract is testable headlessly:
 *
 *   - selection is enabled only once the view reports render-complete,
 *     so elapsed_ms honestly measures render-complete -> click;
 *   - every POST corresponds to exactly one accepted gesture;
 *   - a rejected submission (4xx or network) never advances the queue.
 */

import { Api, ApiError, ImageDetail } from "./api.js";
import { keyToAction } from "./keymap.js";

export const DEFAULT_PAGE_SIZE = 8;

export type Phase =
  | "idle" // before start()
  | "loading" // fetching queue or image detail
  | "rendering" // detail loaded, thumbnails not yet on screen
  | "ready" // selection enabled, clock running
  | "submitting" // POST in flight
  | "done" // queue drained
  | "error"; // could not reach the service

export interface ViewState {
  phase: Phase;
  imageId: string | null;
  detail: ImageDetail | null;
  pendingCount: number;
  page: number;
  pageSize: number;
  renderCompleteAt: number | null;
  selected: number | null;
  errorMessage: string | null;
}

export interface SessionOptions {
  annotator: string;
  pageSize?: number;
  /** Monotonic clock in milliseconds; injectable for tests. */
  now?: () => number;
  onChange?: (state: ViewState) => void;
}

export class SessionController {
  private readonly api: Api;
  private readonly annotator: string;
  private readonly now: () => number;
  private readonly onChange: (state: ViewState) => void;
  private queue: string[] = [];
  private state: ViewState;

  constructor(api: Api, opts: SessionOptions) {
    if (!opts.annotator) {
      throw new Error("annotator id must be non-empty");
    }
    this.api = api;
    this.annotator = opts.annotator;
    this.now = opts.now ?? (() => performance.now());
    this.onChange = opts.onChange ?? (() => {});
    this.state = {
      phase: "idle",
      imageId: null,
      detail: null,
      pendingCount: 0,
      page: 0,
      pageSize: opts.pageSize ?? DEFAULT_PAGE_SIZE,
      renderCompleteAt: null,
      selected: null,
      errorMessage: null,
    };
  }

  snapshot(): ViewState {
    return { ...this.state };
  }

  private patch(changes: Partial<ViewState>): void {
    this.state = { ...this.state, ...changes };
    this.onChange(this.snapshot());
  }

  /** Fetch the pending queue and load its first image. */
  async start(): Promise<void> {
    this.patch({ phase: "loading", errorMessage: null });
    let pending: string[];
    try {
      pending = await this.api.queue(this.annotator);
    } catch (err) {
      this.patch({ phase: "error", errorMessage: describeFailure(err) });
      return;
    }
    this.queue = [...pending];
    await this.advance();
  }

  /** Load the head of the queue, or finish if it is empty. */
  private async advance(): Promise<void> {
    if (this.queue.length === 0) {
      this.patch({
        phase: "done",
        imageId: null,
        detail: null,
        pendingCount: 0,
        renderCompleteAt: null,
        selected: null,
      });
      return;
    }
    const imageId = this.queue[0];
    this.patch({
      phase: "loading",
      imageId,
      detail: null,
      pendingCount: this.queue.length,
      page: 0,
      renderCompleteAt: null,
      selected: null,
    });
    try {
      const detail = await this.api.imageDetail(imageId);
      this.patch({ phase: "rendering", detail });
    } catch (err) {
      this.patch({ phase: "error", errorMessage: describeFailure(err) });
    }
  }

  /**
   * The view calls this once every visible thumbnail has rendered; it arms
   * selection and starts the decision clock. Repeat calls are ignored so a
   * late page repaint cannot restart the timer.
   */
  markRendered(): void {
    if (this.state.phase !== "rendering") {
      return;
    }
    this.patch({ phase: "ready", renderCompleteAt: this.now() });
  }

  /**
   * Submit a selection (-1 = none acceptable). Resolves true when the
   * record was accepted and the session advanced; false when the gesture
   * was ignored or rejected (the current image stays put).
   */
  async select(index: number): Promise<boolean> {
    if (this.state.phase !== "ready" || this.state.renderCompleteAt === null) {
      return false;
    }
    const total = this.state.detail?.candidates.length ?? 0;
    if (index < -1 || index >= total) {
      return false;
    }
    const elapsed = Math.max(0, Math.round(this.now() - this.state.renderCompleteAt));
    this.patch({ phase: "submitting", selected: index });
    try {
      await this.api.submitSelection(this.state.imageId as string, {
        candidate_index: index,
        annotator_id: this.annotator,
        elapsed_ms: elapsed,
      });
    } catch (err) {
      // Rejected or unreachable: keep the image and the original clock so a
      // retry still reports time since render-complete.
      this.patch({ phase: "ready", selected: null, errorMessage: describeFailure(err) });
      return false;
    }
    this.queue.shift();
    this.patch({ errorMessage: null });
    await this.advance();
    return true;
  }

  /** Route a KeyboardEvent.key through the keyboard contract. */
  handleKey(key: string): void {
    if (this.state.phase !== "ready") {
      return;
    }
    const start = this.state.page * this.state.pageSize;
    const total = this.state.detail?.candidates.length ?? 0;
    const visible = Math.max(0, Math.min(this.state.pageSize, total - start));
    const action = keyToAction(key, start, visible);
    if (!action) {
      return;
    }
    if (action.kind === "select") {
      void this.select(action.index);
    } else if (action.kind === "none") {
      void this.select(-1);
    } else {
      this.turnPage(action.delta);
    }
  }

  pageCount(): number {
    const total = this.state.detail?.candidates.length ?? 0;
    return Math.max(1, Math.ceil(total / this.state.pageSize));
  }

  turnPage(delta: number): void {
    const page = Math.min(this.pageCount() - 1, Math.max(0, this.state.page + delta));
    if (page !== this.state.page) {
      this.patch({ page });
    }
  }

  /** Re-run the queue fetch after a connection failure. */
  async retry(): Promise<void> {
    if (this.state.phase === "error") {
      await this.start();
    }
  }
}

function describeFailure(err: unknown): string {
  if (err instanceof ApiError) {
    return `server rejected the request (${err.status}) — try again`;
  }
  return "cannot reach the review service — check the connection and retry";
}
