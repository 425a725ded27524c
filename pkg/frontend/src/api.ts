/**
 * Typed client for the management API.
 *
 * Every request the console makes goes through this module, and the
 * module refuses to issue anything that is not on the documented /v1
 * surface; the allowed routes are data (DOCUMENTED_ENDPOINTS) so the
 * contract suite can check issued traffic against the same table.
 */

export interface TierBadge {
  identity: string;
  count: number;
  state: string;
}

export interface NodeView {
  node_id: string;
  gmt: boolean;
  address: string | null;
  registered_at: number;
  tiers: TierBadge[];
}

export interface NodesResponse {
  nodes: NodeView[];
}

export interface StoreStats {
  deposits: number;
  withdrawals: number;
  cache_hits: number;
  requeues: number;
  failures: number;
  coalesced: number;
  completed: number;
  polls: number;
  pending: Record<string, number>;
  in_process: number;
  warehouse_size: number;
}

export interface DemandView {
  id: string;
  signature: string;
  workload: string;
  stage: string;
  state: string;
  attempts: number;
  content_kind: string;
  payload_size: number;
}

export interface DemandPage {
  demands: DemandView[];
  next_cursor: number | null;
}

export interface DemandQuery {
  state?: string;
  stage?: string;
  cursor?: number;
  limit?: number;
}

export interface JobSummary {
  job_id: string;
  workload: string;
  mode: string;
  stage: string | null;
  state: string;
  result_ready: boolean;
}

export interface RankingEntry {
  speaker_id: string;
  distance: number;
}

export interface JobResult {
  ranking?: RankingEntry[];
  top?: string | null;
  training_set?: string;
  speakers?: string[];
  vectors?: number;
}

export interface JobDetail extends JobSummary {
  speaker_id: string | null;
  created_at: number;
  finished_at: number | null;
  result: JobResult | null;
  error: string | null;
}

export type ParamScalar = boolean | number | string;

export interface JobRequest {
  mode: string;
  input: string;
  format?: string;
  speaker_id?: string;
  workload?: string;
  params?: Record<string, ParamScalar[]>;
}

export interface JobCreated {
  job_id: string;
}

export interface SchemaKey {
  key: string;
  required: boolean;
}

export interface TierSchema {
  tier: string;
  addable: boolean;
  keys: SchemaKey[];
}

export interface TierChange {
  node_id: string;
  identity: string;
  instance_id: string;
  removed?: boolean;
}

/** The server rejected the request; code and message come from its body. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** The server could not be reached at all. */
export class ConnectionLost extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ConnectionLost";
  }
}

/** Management routes the console is allowed to call, and no others. */
export const DOCUMENTED_ENDPOINTS: ReadonlyArray<{
  method: string;
  pattern: RegExp;
}> = [
  { method: "GET", pattern: /^\/v1\/nodes$/ },
  { method: "GET", pattern: /^\/v1\/nodes\/[^/]+$/ },
  { method: "POST", pattern: /^\/v1\/nodes\/[^/]+\/tiers$/ },
  { method: "DELETE", pattern: /^\/v1\/nodes\/[^/]+\/tiers\/[^/]+$/ },
  { method: "GET", pattern: /^\/v1\/store\/stats$/ },
  { method: "GET", pattern: /^\/v1\/demands(\?.*)?$/ },
  { method: "GET", pattern: /^\/v1\/jobs$/ },
  { method: "POST", pattern: /^\/v1\/jobs$/ },
  { method: "GET", pattern: /^\/v1\/jobs\/[^/]+$/ },
  { method: "GET", pattern: /^\/v1\/schema\/[^/]+$/ },
];

export function isDocumented(method: string, path: string): boolean {
  return DOCUMENTED_ENDPOINTS.some(
    (route) => route.method === method && route.pattern.test(path),
  );
}

/**
 * Normalize the operator-supplied base address: bare host:port gets an
 * http scheme, trailing slashes go away.
 */
export function normalizeBaseUrl(raw: string): string {
  let base = raw.trim();
  if (base === "") {
    throw new Error("base URL must not be empty");
  }
  if (!/^https?:\/\//.test(base)) {
    base = `http://${base}`;
  }
  return base.replace(/\/+$/, "");
}

export class ManagementApi {
  readonly baseUrl: string;

  constructor(baseUrl: string) {
    this.baseUrl = normalizeBaseUrl(baseUrl);
  }

  getNodes(): Promise<NodesResponse> {
    return this.request("GET", "/v1/nodes") as Promise<NodesResponse>;
  }

  getNode(nodeId: string): Promise<NodeView> {
    return this.request(
      "GET",
      `/v1/nodes/${encodeURIComponent(nodeId)}`,
    ) as Promise<NodeView>;
  }

  addTier(nodeId: string, identity: string): Promise<TierChange> {
    return this.request("POST", `/v1/nodes/${encodeURIComponent(nodeId)}/tiers`, {
      identity,
    }) as Promise<TierChange>;
  }

  removeTier(nodeId: string, identity: string): Promise<TierChange> {
    const path =
      `/v1/nodes/${encodeURIComponent(nodeId)}` +
      `/tiers/${encodeURIComponent(identity)}`;
    return this.request("DELETE", path) as Promise<TierChange>;
  }

  getStats(): Promise<StoreStats> {
    return this.request("GET", "/v1/store/stats") as Promise<StoreStats>;
  }

  getDemands(query: DemandQuery = {}): Promise<DemandPage> {
    const search = new URLSearchParams();
    if (query.state !== undefined) search.set("state", query.state);
    if (query.stage !== undefined) search.set("stage", query.stage);
    if (query.cursor !== undefined) search.set("cursor", String(query.cursor));
    if (query.limit !== undefined) search.set("limit", String(query.limit));
    const text = search.toString();
    const suffix = text === "" ? "" : `?${text}`;
    return this.request("GET", `/v1/demands${suffix}`) as Promise<DemandPage>;
  }

  getJobs(): Promise<{ jobs: JobSummary[] }> {
    return this.request("GET", "/v1/jobs") as Promise<{ jobs: JobSummary[] }>;
  }

  getJob(jobId: string): Promise<JobDetail> {
    return this.request(
      "GET",
      `/v1/jobs/${encodeURIComponent(jobId)}`,
    ) as Promise<JobDetail>;
  }

  submitJob(body: JobRequest): Promise<JobCreated> {
    return this.request("POST", "/v1/jobs", body) as Promise<JobCreated>;
  }

  getSchema(tier: string): Promise<TierSchema> {
    return this.request(
      "GET",
      `/v1/schema/${encodeURIComponent(tier)}`,
    ) as Promise<TierSchema>;
  }

  private async request(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<unknown> {
    if (!isDocumented(method, path)) {
      throw new Error(`undocumented endpoint refused: ${method} ${path}`);
    }
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, init);
    } catch (exc) {
      throw new ConnectionLost(`cannot reach ${this.baseUrl}: ${String(exc)}`);
    }
    if (!response.ok) {
      throw await this.toApiError(response);
    }
    return response.json();
  }

  private async toApiError(response: Response): Promise<ApiError> {
    // Error bodies are {"error": message, "code": slug}; anything else
    // still becomes an ApiError so callers have one failure shape.
    let message = `HTTP ${response.status}`;
    let code = "http-error";
    try {
      const document = (await response.json()) as Record<string, unknown>;
      if (typeof document.error === "string") message = document.error;
      if (typeof document.code === "string") code = document.code;
    } catch {
      // body was not JSON; keep the fallbacks
    }
    return new ApiError(response.status, code, message);
  }
}
