/** Typed client for the annotation service's JSON endpoints. */

export interface PaperPayload {
  id: string;
  title: string;
  abstract: string;
}

export interface NextItem {
  paper: PaperPayload;
  guidelines_version: string;
}

export interface AggregateInfo {
  paper_id: string;
  mean_stance: number;
  n_annotators: number;
  coarse: string;
}

export interface AgreementRow {
  co_annotator: string;
  pearson: number | null;
  kappa: number;
  n_common: number;
}

export interface SubmitResponse {
  status: string;
  overwritten: boolean;
  aggregate: AggregateInfo;
  agreement: AgreementRow[] | null;
  labels_submitted: number;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Server rejected the request (4xx); carries the HTTP status. */
export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (typeof body?.detail === "string") return body.detail;
    return JSON.stringify(body);
  } catch {
    return response.statusText || `HTTP ${response.status}`;
  }
}

export class AnnotationApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  /** One leased paper from the queue, or null when the queue is done. */
  async fetchNext(annotator: string): Promise<NextItem | null> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/queue/next?annotator=${encodeURIComponent(annotator)}`,
    );
    if (response.status === 204) return null;
    if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
    return (await response.json()) as NextItem;
  }

  async submit(annotator: string, paperId: string, stance: number): Promise<SubmitResponse> {
    const response = await this.fetchImpl(`${this.baseUrl}/annotations`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ annotator_id: annotator, paper_id: paperId, stance }),
    });
    if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
    return (await response.json()) as SubmitResponse;
  }

  async agreement(annotator: string): Promise<AgreementRow[]> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/agreement?annotator=${encodeURIComponent(annotator)}`,
    );
    if (response.status === 404) return [];
    if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
    const body = (await response.json()) as { rows: AgreementRow[] };
    return body.rows;
  }

  async guidelines(): Promise<string> {
    const response = await this.fetchImpl(`${this.baseUrl}/guidelines`);
    if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
    return await response.text();
  }
}
