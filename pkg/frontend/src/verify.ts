// Template-match verification flow: walk the pending queue pair by pair,
// post accept/reject verdicts, keep a chip strip of settled pairs. Verdict
// buttons lock as soon as one is clicked and stay locked until the next
// pair renders.

import { ApiError, ReviewApi } from "./api.js";
import type { QueueEntry } from "./types.js";
import {
  historyChip,
  renderErrorBanner,
  renderIdleQueue,
  renderVerification,
  type QueueViewHandle,
} from "./views.js";

export class VerificationFlow {
  private history: HTMLElement;
  private currentView: QueueViewHandle | null = null;

  constructor(
    private api: ReviewApi,
    private container: HTMLElement,
    private reviewer: string,
  ) {
    this.history = document.createElement("div");
    this.history.className = "history-strip";
  }

  async start(): Promise<void> {
    await this.loadNext();
  }

  async loadNext(): Promise<void> {
    let queue: QueueEntry[];
    try {
      queue = await this.api.matchQueue();
    } catch (error) {
      const banner = renderErrorBanner(
        error instanceof Error ? error.message : "network failure",
      );
      banner.retry.addEventListener("click", () => void this.loadNext());
      this.container.replaceChildren(banner.root);
      this.currentView = null;
      return;
    }
    const pending = queue.filter((entry) => entry.status === "stage2_pass");
    if (pending.length === 0) {
      const idle = renderIdleQueue();
      idle.append(this.history);
      this.container.replaceChildren(idle);
      this.currentView = null;
      return;
    }
    const pair = pending[0];
    const view = renderVerification(pair, (id) => this.api.mediaUrl(id), this.history);
    view.acceptButton.addEventListener("click", () => void this.submit(pair, "accept"));
    view.rejectButton.addEventListener("click", () => void this.submit(pair, "reject"));
    this.container.replaceChildren(view.root);
    this.currentView = view;
  }

  async submit(pair: QueueEntry, verdict: "accept" | "reject"): Promise<void> {
    this.currentView?.disableVerdicts();
    try {
      const settled = await this.api.verdict(pair.key, verdict, this.reviewer);
      this.history.append(historyChip(settled.key, settled.status));
    } catch (error) {
      // a conflicting verdict (pair already settled elsewhere) still advances
      if (!(error instanceof ApiError && error.status === 409)) {
        const banner = renderErrorBanner(
          error instanceof Error ? error.message : "verdict failed",
        );
        banner.retry.addEventListener("click", () => void this.loadNext());
        this.container.replaceChildren(banner.root);
        this.currentView = null;
        return;
      }
    }
    await this.loadNext();
  }

  handleKey(event: KeyboardEvent): void {
    if (!this.currentView) return;
    if (event.key === "a" || event.key === "A") this.currentView.acceptButton.click();
    if (event.key === "r" || event.key === "R") this.currentView.rejectButton.click();
  }
}
