// Survey flow: fetch the next blinded item, collect a selection, post the
// vote, advance. The server stays the source of truth; on a rejected vote
// the item is re-rendered with the error inline and no advance happens.

import { ApiError, ReviewApi } from "./api.js";
import type { NextItemResponse, SurveyItem } from "./types.js";
import {
  renderCompletion,
  renderErrorBanner,
  renderItem,
  renderTally,
  renderTokenPrompt,
  type ItemViewHandle,
} from "./views.js";

export class SurveyFlow {
  private current: ItemViewHandle | null = null;

  constructor(
    private api: ReviewApi,
    private surveyId: string,
    private container: HTMLElement,
    private token: string | null = null,
  ) {}

  get evaluatorToken(): string | null {
    return this.token;
  }

  async start(): Promise<void> {
    if (!this.token) {
      this.promptForToken();
      return;
    }
    await this.fetchNext();
  }

  private promptForToken(message?: string): void {
    const prompt = renderTokenPrompt();
    if (message) {
      const note = document.createElement("p");
      note.className = "token-note";
      note.textContent = message;
      prompt.root.prepend(note);
    }
    prompt.button.addEventListener("click", () => {
      const value = prompt.input.value.trim();
      if (!value) return;
      this.token = value;
      void this.fetchNext();
    });
    this.show(prompt.root);
  }

  async fetchNext(): Promise<void> {
    let response: NextItemResponse;
    try {
      response = await this.api.nextItem(this.surveyId, this.token ?? "");
    } catch (error) {
      if (error instanceof ApiError && error.status === 401) {
        this.token = null;
        this.promptForToken("That token was not accepted.");
        return;
      }
      const banner = renderErrorBanner(
        error instanceof Error ? error.message : "network failure",
      );
      banner.retry.addEventListener("click", () => void this.fetchNext());
      this.show(banner.root);
      return;
    }
    if (response.done || !response.item) {
      this.showCompletion(response);
      return;
    }
    this.showItem(response.item, response);
  }

  private showItem(item: SurveyItem, response: NextItemResponse): void {
    const handle = renderItem(item, response.progress, (memeId) =>
      this.api.mediaUrl(memeId),
    );
    handle.submitButton.addEventListener("click", () => void this.submit(item));
    this.show(handle.root);
    this.current = handle;
  }

  async submit(item: SurveyItem): Promise<void> {
    const handle = this.current;
    if (!handle) return;
    const selected = handle.selections();
    if (selected.length === 0) {
      handle.errorBox.hidden = false;
      handle.errorBox.textContent = "Select at least one answer first.";
      return;
    }
    handle.submitButton.disabled = true;
    try {
      await this.api.submitVote({
        evaluator_id: this.token ?? "",
        item_id: item.item_id,
        selected,
      });
    } catch (error) {
      handle.submitButton.disabled = false;
      handle.errorBox.hidden = false;
      handle.errorBox.textContent =
        error instanceof ApiError ? error.detail : "vote failed; try again";
      return;
    }
    await this.fetchNext();
  }

  private showCompletion(response: NextItemResponse): void {
    const root = renderCompletion(response.progress, "#tally");
    const link = root.querySelector("a.tally-link");
    link?.addEventListener("click", (event) => {
      event.preventDefault();
      void this.showTally();
    });
    this.show(root);
  }

  async showTally(): Promise<void> {
    const tally = await this.api.tally(this.surveyId);
    this.show(renderTally(tally));
  }

  handleKey(event: KeyboardEvent): void {
    if (!this.current) return;
    const num = Number.parseInt(event.key, 10);
    if (Number.isInteger(num) && num >= 1 && num <= 9) {
      this.current.toggleByNumber(num);
    } else if (event.key === "Enter") {
      this.current.submitButton.click();
    }
  }

  private show(node: HTMLElement): void {
    this.current = null;
    this.container.replaceChildren(node);
  }
}
