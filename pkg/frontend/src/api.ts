/** Typed client for the trial service HTTP API. The console performs no
 * statistics of its own: every number it displays comes from these
 * responses verbatim. */

export interface PolicyConfig {
  kind: "myopic" | "nonmyopic" | "pseudo";
  horizon?: number;
  trajectories?: number;
  dist?: "correct" | "empirical";
}

export interface TrialConfig {
  n: number;
  n0: number;
  s?: number;
  seed?: number;
  policy?: PolicyConfig;
  covariates?: Record<string, unknown>;
  prior?: { intercept_scale?: number; scale?: number };
}

export interface EnrollResult {
  subject_index: number;
  treatment: number | null;
  allocation_probability: number | null;
  prob_plus?: number;
  status: "buffered" | "initial_design" | "allocated";
  initial_treatments?: number[];
}

export interface ResponseResult {
  subject_index: number;
  phase: string;
  beta_hat: number[];
  psi_current: number | null;
}

export interface HistoryEntry {
  subject_index: number;
  psi_plus: number;
  psi_minus: number;
  prob_plus: number;
  treatment: number;
}

export interface Snapshot {
  id: string;
  phase: "collecting_initial" | "active" | "complete";
  n: number;
  n0: number;
  n_enrolled: number;
  n_responded: number;
  beta_hat: number[] | null;
  converged: boolean | null;
  psi_trace: number[];
  beta_trace: number[][];
  trace_sample_sizes: number[];
  history: HistoryEntry[];
  treatments: number[];
  covariates: number[][];
  responses: number[];
  cell_counts: Record<string, number>;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function parseError(res: Response): Promise<never> {
  let code = "error";
  let message = res.statusText;
  try {
    const body = await res.json();
    if (body && body.detail) {
      code = body.detail.code ?? code;
      message = body.detail.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(res.status, code, message);
}

export class ApiClient {
  constructor(
    public baseUrl: string,
    public token?: string,
  ) {}

  private headers(): Record<string, string> {
    const h: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) h["Authorization"] = `Bearer ${this.token}`;
    return h;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await fetch(this.baseUrl + path, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) await parseError(res);
    return (await res.json()) as T;
  }

  createTrial(config: TrialConfig, id?: string) {
    return this.request<{ id: string; phase: string }>("POST", "/trials", {
      id,
      config,
    });
  }

  enroll(trialId: string, covariates: number[]) {
    return this.request<EnrollResult>("POST", `/trials/${trialId}/subjects`, {
      covariates,
    });
  }

  respond(trialId: string, subjectIndex: number, y: 0 | 1) {
    return this.request<ResponseResult>("POST", `/trials/${trialId}/responses`, {
      subject_index: subjectIndex,
      y,
    });
  }

  snapshot(trialId: string) {
    return this.request<Snapshot>("GET", `/trials/${trialId}`);
  }

  health() {
    return this.request<{ status: string }>("GET", "/healthz");
  }
}
