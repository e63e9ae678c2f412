// Entry point: picks the survey or verification flow from the URL
// (?survey=<id> or #verify), restores the evaluator token, and wires
// keyboard shortcuts (1-9 select, Enter submits, A/R verdicts).

import { ReviewApi } from "./api.js";
import { SurveyFlow } from "./survey.js";
import { VerificationFlow } from "./verify.js";

const TOKEN_KEY = "memekit-evaluator-token";

export function bootstrap(root: HTMLElement, location: Location = window.location): void {
  const api = new ReviewApi("");
  const params = new URLSearchParams(location.search);
  if (location.hash === "#verify") {
    const reviewer = localStorage.getItem(TOKEN_KEY) ?? "reviewer";
    const flow = new VerificationFlow(api, root, reviewer);
    document.addEventListener("keydown", (event) => flow.handleKey(event));
    void flow.start();
    return;
  }
  const surveyId = params.get("survey") ?? "survey-1";
  const token = localStorage.getItem(TOKEN_KEY);
  const flow = new SurveyFlow(api, surveyId, root, token);
  document.addEventListener("keydown", (event) => flow.handleKey(event));
  void flow.start().then(() => {
    const current = flow.evaluatorToken;
    if (current) localStorage.setItem(TOKEN_KEY, current);
  });
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  bootstrap(document.getElementById("app") as HTMLElement);
}
