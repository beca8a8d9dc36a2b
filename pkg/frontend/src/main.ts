/** Browser entry point: reads the API base URL and trial id from the query
 * string, binds the enroll/response forms to the console. */

import { ApiClient } from "./api.js";
import { TrialConsole } from "./console.js";

export function setup(doc: Document): TrialConsole {
  const params = new URLSearchParams(doc.defaultView?.location.search ?? "");
  const base = params.get("api") ?? "http://127.0.0.1:8000";
  const api = new ApiClient(base, params.get("token") ?? undefined);
  const root = doc.getElementById("console-root");
  if (!root) throw new Error("missing #console-root element");
  const console_ = new TrialConsole(root, api);

  const enrollForm = doc.getElementById("enroll-form") as HTMLFormElement | null;
  enrollForm?.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const data = new FormData(enrollForm);
    const covariates = String(data.get("covariates") ?? "")
      .split(",")
      .map((v) => Number(v.trim()));
    void console_.submitEnrollment(covariates);
  });

  const respForm = doc.getElementById("response-form") as HTMLFormElement | null;
  respForm?.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const data = new FormData(respForm);
    const idx = Number(data.get("subject_index"));
    const y = Number(data.get("y")) === 1 ? 1 : 0;
    void console_.submitResponse(idx, y);
  });

  const trialId = params.get("trial");
  if (trialId) void console_.open(trialId);
  return console_;
}

if (typeof document !== "undefined" && document.getElementById("console-root")) {
  setup(document);
}
