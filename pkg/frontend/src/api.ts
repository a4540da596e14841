// Typed client for the review service REST API. The UI talks to the
// backend exclusively through these calls and never caches server truth.

export type ClusterView = {
  id: number;
  size: number;
  top_terms: [string, number][];
  sample_doc_ids: string[];
  label: string | null;
};

export type ClustersResponse = {
  k: number;
  clusters: ClusterView[];
};

export type DocExcerpt = {
  id: string;
  excerpt: string;
  truncated: boolean;
};

export type ClusterDocsPage = {
  cluster: number;
  page: number;
  page_size: number;
  total: number;
  docs: DocExcerpt[];
};

export type SessionState = {
  dataset: string;
  dendrogram: string;
  n_docs: number;
  k: number;
  label_map: Record<string, string>;
  audit_log: Record<string, unknown>[];
  export_path: string;
};

export type DendrogramData = {
  n_leaves: number;
  merges: [number, number, number, number][];
};

export type ExportResult = {
  path: string;
  categories: string[];
  counts: Record<string, number>;
  percentages: Record<string, number>;
  total: number;
};

export type ErrorPayload = {
  error: string;
  detail?: string;
  unlabeled?: number[];
};

export class ApiError extends Error {
  status: number;
  payload: ErrorPayload;

  constructor(status: number, payload: ErrorPayload) {
    super(payload.detail ?? payload.error);
    this.status = status;
    this.payload = payload;
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(path, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (!resp.ok) {
    let payload: ErrorPayload;
    try {
      payload = (await resp.json()) as ErrorPayload;
    } catch {
      payload = { error: `request failed with status ${resp.status}` };
    }
    throw new ApiError(resp.status, payload);
  }
  return (await resp.json()) as T;
}

export const api = {
  session: () => request<SessionState>("/api/session"),
  clusters: (k?: number) =>
    request<ClustersResponse>(k ? `/api/clusters?k=${k}` : "/api/clusters"),
  clusterDocs: (id: number, page: number, pageSize: number) =>
    request<ClusterDocsPage>(`/api/cluster/${id}/docs?page=${page}&page_size=${pageSize}`),
  dendrogram: () => request<DendrogramData>("/api/dendrogram"),
  assignLabel: (cluster: number, label: string) =>
    request<{ cluster: number; label: string }>("/api/labels", {
      method: "POST",
      body: JSON.stringify({ cluster, label }),
    }),
  cut: (k: number) =>
    request<{ k: number; dropped_labels: number[] }>("/api/cut", {
      method: "POST",
      body: JSON.stringify({ k }),
    }),
  exportDataset: () => request<ExportResult>("/api/export", { method: "POST" }),
};
