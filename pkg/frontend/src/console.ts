/** The operator console: enroll form, allocation card, response form,
 * trace charts, cell-count grid. View state is derived solely from API
 * responses; re-fetched after every mutation. */

import { ApiClient, ApiError, EnrollResult, Snapshot } from "./api.js";
import { betaSeries, psiSeries, renderChart } from "./charts.js";

function el(doc: Document, tag: string, cls: string, text?: string): HTMLElement {
  const node = doc.createElement(tag);
  node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class TrialConsole {
  trialId: string | null = null;
  snapshot: Snapshot | null = null;
  lastAllocation: EnrollResult | null = null;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
  ) {}

  private get doc(): Document {
    return this.root.ownerDocument;
  }

  async open(trialId: string): Promise<void> {
    this.trialId = trialId;
    await this.refresh();
  }

  async refresh(): Promise<void> {
    if (!this.trialId) return;
    this.snapshot = await this.api.snapshot(this.trialId);
    this.render();
  }

  /** Enroll one arriving subject. The allocation card shows the API's
   * probability verbatim; errors render as a banner, not an exception. */
  async submitEnrollment(covariates: number[]): Promise<EnrollResult | null> {
    if (!this.trialId) return null;
    try {
      const result = await this.api.enroll(this.trialId, covariates);
      this.lastAllocation = result;
      await this.refresh();
      return result;
    } catch (err) {
      this.showError(err);
      return null;
    }
  }

  async submitResponse(subjectIndex: number, y: 0 | 1): Promise<boolean> {
    if (!this.trialId) return false;
    try {
      await this.api.respond(this.trialId, subjectIndex, y);
      await this.refresh();
      return true;
    } catch (err) {
      this.showError(err);
      return false;
    }
  }

  private showError(err: unknown): void {
    const banner =
      this.root.querySelector<HTMLElement>(".error-banner") ??
      this.root.appendChild(el(this.doc, "div", "error-banner"));
    if (err instanceof ApiError) {
      banner.textContent = `${err.code}: ${err.message}`;
    } else {
      banner.textContent = String(err);
    }
    banner.setAttribute("data-visible", "true");
  }

  render(): void {
    const snap = this.snapshot;
    this.root.innerHTML = "";
    if (!snap) return;
    const doc = this.doc;

    const header = el(doc, "div", "trial-header");
    header.appendChild(el(doc, "span", "trial-id", snap.id));
    header.appendChild(el(doc, "span", `phase-badge phase-${snap.phase}`, snap.phase));
    header.appendChild(
      el(doc, "span", "subject-counter", `${snap.n_responded}/${snap.n} responded`),
    );
    this.root.appendChild(header);

    if (this.lastAllocation && this.lastAllocation.treatment !== null) {
      const card = el(doc, "div", "allocation-card");
      card.appendChild(
        el(doc, "span", "subject-index", String(this.lastAllocation.subject_index)),
      );
      card.appendChild(
        el(doc, "span", "treatment", String(this.lastAllocation.treatment)),
      );
      if (this.lastAllocation.allocation_probability !== null) {
        // verbatim API value; no rounding
        card.appendChild(
          el(
            doc,
            "span",
            "allocation-probability",
            String(this.lastAllocation.allocation_probability),
          ),
        );
      }
      this.root.appendChild(card);
    }

    const charts = el(doc, "div", "charts");
    const psiBox = el(doc, "div", "chart psi-chart");
    psiBox.appendChild(renderChart(doc, [psiSeries(snap)]));
    charts.appendChild(psiBox);
    const betaBox = el(doc, "div", "chart beta-chart");
    betaBox.appendChild(renderChart(doc, betaSeries(snap)));
    charts.appendChild(betaBox);
    this.root.appendChild(charts);

    const grid = el(doc, "table", "cell-grid");
    for (const [key, count] of Object.entries(snap.cell_counts)) {
      const row = el(doc, "tr", "cell-row");
      row.appendChild(el(doc, "td", "cell-key", key));
      row.appendChild(el(doc, "td", "cell-count", String(count)));
      grid.appendChild(row);
    }
    this.root.appendChild(grid);

    const history = el(doc, "ol", "history");
    for (const entry of snap.history) {
      history.appendChild(
        el(
          doc,
          "li",
          "history-entry",
          `#${entry.subject_index} t=${entry.treatment} p(+1)=${entry.prob_plus}`,
        ),
      );
    }
    this.root.appendChild(history);

    this.root.appendChild(el(doc, "div", "error-banner"));
  }
}
