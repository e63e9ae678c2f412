import { beforeEach, describe, expect, it, vi } from "vitest";

import { ReviewApi } from "../src/api.js";
import { VerificationFlow } from "../src/verify.js";
import { FakeReviewService, makeQueueEntry } from "./fake_service.js";

let service: FakeReviewService;
let container: HTMLElement;

function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

beforeEach(() => {
  service = new FakeReviewService("survey-1", [], [], () => "");
  service.queue = [makeQueueEntry("i1", "t1"), makeQueueEntry("i2", "t2")];
  vi.stubGlobal("fetch", service.fetchHandler);
  document.body.innerHTML = '<div id="app"></div>';
  container = document.getElementById("app") as HTMLElement;
});

describe("verification flow", () => {
  it("renders the pair side by side with scores", async () => {
    const flow = new VerificationFlow(new ReviewApi(""), container, "reviewer-1");
    await flow.start();
    const view = container.querySelector(".queue-view")!;
    expect(view.getAttribute("data-pair-key")).toBe("i1::t1");
    expect(view.querySelectorAll("img").length).toBe(2);
    expect(view.querySelector(".pair-scores")?.textContent).toContain("0.420");
    expect(view.querySelector(".pair-scores")?.textContent).toContain("0.110");
  });

  it("accept flips the chip to verified and loads the next pair", async () => {
    const flow = new VerificationFlow(new ReviewApi(""), container, "reviewer-1");
    await flow.start();
    (container.querySelector("button.accept") as HTMLButtonElement).click();
    await flush();
    expect(container.querySelector(".queue-view")?.getAttribute("data-pair-key")).toBe("i2::t2");
    const chips = container.querySelectorAll(".history-strip .chip");
    expect(chips.length).toBe(1);
    expect(chips[0].textContent).toBe("i1::t1: verified");
    expect(service.queue[0].status).toBe("verified");
  });

  it("reject removes the pair from the queue", async () => {
    const flow = new VerificationFlow(new ReviewApi(""), container, "reviewer-1");
    await flow.start();
    (container.querySelector("button.reject") as HTMLButtonElement).click();
    await flush();
    expect(service.queue[0].status).toBe("rejected");
    const remaining = service.queue.filter((e) => e.status === "stage2_pass");
    expect(remaining.map((e) => e.key)).toEqual(["i2::t2"]);
  });

  it("verdict buttons disable immediately after a click", async () => {
    const flow = new VerificationFlow(new ReviewApi(""), container, "reviewer-1");
    await flow.start();
    const accept = container.querySelector("button.accept") as HTMLButtonElement;
    const reject = container.querySelector("button.reject") as HTMLButtonElement;
    accept.click();
    expect(accept.disabled).toBe(true);
    expect(reject.disabled).toBe(true);
    await flush();
  });

  it("shows the idle screen when the queue is exhausted", async () => {
    const flow = new VerificationFlow(new ReviewApi(""), container, "reviewer-1");
    await flow.start();
    (container.querySelector("button.accept") as HTMLButtonElement).click();
    await flush();
    (container.querySelector("button.reject") as HTMLButtonElement).click();
    await flush();
    expect(container.querySelector(".idle-view")).toBeTruthy();
    expect(container.querySelectorAll(".chip").length).toBe(2);
  });

  it("keyboard shortcuts drive verdicts", async () => {
    const flow = new VerificationFlow(new ReviewApi(""), container, "reviewer-1");
    await flow.start();
    flow.handleKey(new KeyboardEvent("keydown", { key: "a" }));
    await flush();
    expect(service.queue[0].status).toBe("verified");
    flow.handleKey(new KeyboardEvent("keydown", { key: "R" }));
    await flush();
    expect(service.queue[1].status).toBe("rejected");
  });

  it("starts idle when nothing is pending", async () => {
    service.queue = [];
    const flow = new VerificationFlow(new ReviewApi(""), container, "reviewer-1");
    await flow.start();
    expect(container.querySelector(".idle-view")).toBeTruthy();
  });
});
