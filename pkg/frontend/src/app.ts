/** Annotation frontend: one paper at a time, a continuous stance input,
 * guidelines on demand, and live agreement feedback. */

import { AgreementRow, AnnotationApi, ApiError, PaperPayload } from "./api.js";
import { renderMarkdown } from "./markdown.js";

export interface ViewState {
  paper: PaperPayload | null;
  stance: number | null; // null until the annotator moves an input
  guidelinesOpen: boolean;
  agreementRows: AgreementRow[];
  labelsSubmitted: number;
  done: boolean;
}

const STEP = 0.01;

function clamp(value: number): number {
  return Math.max(-1, Math.min(1, value));
}

export class AnnotationApp {
  readonly state: ViewState = {
    paper: null,
    stance: null,
    guidelinesOpen: false,
    agreementRows: [],
    labelsSubmitted: 0,
    done: false,
  };

  private readonly elements: {
    title: HTMLElement;
    abstract: HTMLElement;
    slider: HTMLInputElement;
    number: HTMLInputElement;
    submit: HTMLButtonElement;
    notice: HTMLElement;
    banner: HTMLElement;
    counter: HTMLElement;
    agreementBody: HTMLElement;
    agreementEmpty: HTMLElement;
    guidelinesPanel: HTMLElement;
    guidelinesBody: HTMLElement;
    guidelinesNav: HTMLElement;
    guidelinesToggle: HTMLButtonElement;
    card: HTMLElement;
    completion: HTMLElement;
  };

  private guidelinesLoaded = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: AnnotationApi,
    private readonly annotator: string,
  ) {
    this.root.innerHTML = `
      <header class="topbar">
        <span class="brand">stance annotation</span>
        <span class="annotator">annotator: <strong data-role="annotator"></strong></span>
        <span class="counter" data-role="counter">0 labeled</span>
        <button type="button" data-role="guidelines-toggle">Guidelines</button>
      </header>
      <div class="banner hidden" data-role="banner" role="alert"></div>
      <main>
        <section class="card" data-role="card">
          <h2 data-role="title"></h2>
          <p class="abstract" data-role="abstract"></p>
          <div class="stance-input">
            <label>stance
              <input type="range" min="-1" max="1" step="${STEP}" data-role="slider" />
            </label>
            <input type="number" min="-1" max="1" step="${STEP}" data-role="number" />
            <button type="button" data-role="submit" disabled>Submit</button>
          </div>
          <div class="notice hidden" data-role="notice"></div>
        </section>
        <section class="completion hidden" data-role="completion">
          <h2>All done</h2>
          <p>No more papers in your queue. Thank you!</p>
        </section>
        <aside class="agreement">
          <h3>Agreement with co-annotators</h3>
          <p class="hint" data-role="agreement-empty">No feedback yet; it appears
            once you share enough papers with another annotator.</p>
          <table class="hidden" data-role="agreement-table">
            <thead><tr><th>co-annotator</th><th>r</th><th>&kappa;</th><th>common</th></tr></thead>
            <tbody data-role="agreement-body"></tbody>
          </table>
        </aside>
      </main>
      <aside class="guidelines hidden" data-role="guidelines-panel">
        <nav data-role="guidelines-nav"></nav>
        <div data-role="guidelines-body"></div>
      </aside>
    `;
    const get = <T extends HTMLElement>(role: string): T => {
      const el = this.root.querySelector<T>(`[data-role="${role}"]`);
      if (!el) throw new Error(`missing element ${role}`);
      return el;
    };
    this.elements = {
      title: get("title"),
      abstract: get("abstract"),
      slider: get<HTMLInputElement>("slider"),
      number: get<HTMLInputElement>("number"),
      submit: get<HTMLButtonElement>("submit"),
      notice: get("notice"),
      banner: get("banner"),
      counter: get("counter"),
      agreementBody: get("agreement-body"),
      agreementEmpty: get("agreement-empty"),
      guidelinesPanel: get("guidelines-panel"),
      guidelinesBody: get("guidelines-body"),
      guidelinesNav: get("guidelines-nav"),
      guidelinesToggle: get<HTMLButtonElement>("guidelines-toggle"),
      card: get("card"),
      completion: get("completion"),
    };
    get<HTMLElement>("annotator").textContent = annotator;

    this.elements.slider.addEventListener("input", () => {
      this.setStance(parseFloat(this.elements.slider.value));
    });
    this.elements.number.addEventListener("input", () => {
      const parsed = parseFloat(this.elements.number.value);
      if (!Number.isNaN(parsed)) this.setStance(parsed);
    });
    this.elements.submit.addEventListener("click", () => {
      void this.submitStance();
    });
    this.elements.guidelinesToggle.addEventListener("click", () => {
      void this.toggleGuidelines();
    });
  }

  /** Record a stance locally; the value never leaves [-1, 1]. */
  setStance(value: number): void {
    const clamped = clamp(value);
    this.state.stance = clamped;
    this.elements.slider.value = String(clamped);
    this.elements.number.value = String(clamped);
    this.elements.submit.disabled = false;
  }

  async start(): Promise<void> {
    await this.fetchNext();
  }

  async fetchNext(): Promise<void> {
    this.hideBanner();
    let item;
    try {
      item = await this.api.fetchNext(this.annotator);
    } catch (error) {
      // Keep whatever the annotator already typed: no data loss on failure.
      this.showBanner(`Could not reach the server (${describe(error)}).`, () =>
        this.fetchNext(),
      );
      return;
    }
    if (item === null) {
      this.state.paper = null;
      this.state.done = true;
      this.elements.card.classList.add("hidden");
      this.elements.completion.classList.remove("hidden");
      return;
    }
    this.state.paper = item.paper;
    this.state.done = false;
    this.state.stance = null;
    this.elements.card.classList.remove("hidden");
    this.elements.completion.classList.add("hidden");
    this.elements.title.textContent = item.paper.title;
    this.elements.abstract.textContent = item.paper.abstract;
    this.elements.slider.value = "0";
    this.elements.number.value = "";
    this.elements.submit.disabled = true;
    this.hideNotice();
  }

  async submitStance(): Promise<void> {
    const paper = this.state.paper;
    if (!paper || this.state.stance === null) return;
    this.hideBanner();
    let response;
    try {
      response = await this.api.submit(this.annotator, paper.id, this.state.stance);
    } catch (error) {
      if (error instanceof ApiError && error.status >= 400 && error.status < 500) {
        this.showNotice(`Submission rejected: ${error.message}`, "error");
      } else {
        this.showBanner(`Submit failed (${describe(error)}); your value is kept.`, () =>
          this.submitStance(),
        );
      }
      return; // unsent value stays in the inputs
    }
    this.state.labelsSubmitted = response.labels_submitted;
    this.elements.counter.textContent = `${response.labels_submitted} labeled`;
    if (response.overwritten) {
      this.showNotice(
        `Updated your earlier label for this paper (consensus now ${response.aggregate.mean_stance.toFixed(2)}).`,
        "info",
      );
    }
    if (response.agreement) this.renderAgreement(response.agreement);
    await this.fetchNext();
  }

  renderAgreement(rows: AgreementRow[]): void {
    this.state.agreementRows = rows;
    const table = this.root.querySelector<HTMLElement>('[data-role="agreement-table"]');
    if (!table) return;
    if (rows.length === 0) {
      table.classList.add("hidden");
      this.elements.agreementEmpty.classList.remove("hidden");
      return;
    }
    table.classList.remove("hidden");
    this.elements.agreementEmpty.classList.add("hidden");
    this.elements.agreementBody.replaceChildren(
      ...rows.map((row) => {
        const tr = document.createElement("tr");
        for (const value of [
          row.co_annotator,
          row.pearson === null ? "-" : row.pearson.toFixed(2),
          row.kappa.toFixed(2),
          String(row.n_common),
        ]) {
          const td = document.createElement("td");
          td.textContent = value;
          tr.append(td);
        }
        return tr;
      }),
    );
  }

  async toggleGuidelines(): Promise<void> {
    this.state.guidelinesOpen = !this.state.guidelinesOpen;
    this.elements.guidelinesPanel.classList.toggle("hidden", !this.state.guidelinesOpen);
    if (!this.state.guidelinesOpen || this.guidelinesLoaded) return;
    let text: string;
    try {
      text = await this.api.guidelines();
    } catch (error) {
      this.elements.guidelinesBody.textContent = `Guidelines unavailable (${describe(error)}).`;
      return;
    }
    const sections = renderMarkdown(this.elements.guidelinesBody, text);
    this.elements.guidelinesNav.replaceChildren(
      ...sections
        .filter((s) => s.id !== null)
        .map((s) => {
          const link = document.createElement("a");
          link.href = `#${s.id}`;
          link.textContent = s.title;
          link.addEventListener("click", (event) => {
            event.preventDefault();
            this.jumpToSection(s.id!);
          });
          return link;
        }),
    );
    this.guidelinesLoaded = true;
  }

  jumpToSection(id: string): void {
    const target = this.elements.guidelinesBody.querySelector<HTMLElement>(`#${id}`);
    if (!target) return;
    for (const current of this.elements.guidelinesBody.querySelectorAll("[aria-current]")) {
      current.removeAttribute("aria-current");
    }
    target.setAttribute("aria-current", "true");
    if (typeof target.scrollIntoView === "function") target.scrollIntoView();
  }

  private showBanner(message: string, retry: () => Promise<void> | void): void {
    const banner = this.elements.banner;
    banner.replaceChildren();
    banner.append(message + " ");
    const button = document.createElement("button");
    button.type = "button";
    button.textContent = "Retry";
    button.addEventListener("click", () => void retry());
    banner.append(button);
    banner.classList.remove("hidden");
  }

  private hideBanner(): void {
    this.elements.banner.classList.add("hidden");
    this.elements.banner.replaceChildren();
  }

  private showNotice(message: string, kind: "info" | "error"): void {
    this.elements.notice.textContent = message;
    this.elements.notice.classList.remove("hidden");
    this.elements.notice.dataset.kind = kind;
  }

  private hideNotice(): void {
    this.elements.notice.classList.add("hidden");
    this.elements.notice.textContent = "";
  }
}

function describe(error: unknown): string {
  if (error instanceof Error) return error.message;
  return String(error);
}
