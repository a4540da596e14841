// The review application. The server owns all truth: every mutation waits
// for its acknowledgment and then re-renders from a fresh /api/session +
// /api/clusters fetch, so what is on screen is never stale client state.

import {
  api,
  ApiError,
  type ClusterView,
  type DendrogramData,
  type ExportResult,
  type SessionState,
} from "./api.js";
import { buildTree, initiallyExpanded, type TreeNode } from "./dendro.js";

const PAGE_SIZE = 10;

type DocsPageView = {
  cluster: number;
  page: number;
  total: number;
  docs: { id: string; excerpt: string; truncated: boolean }[];
};

type AppState = {
  session: SessionState | null;
  clusters: ClusterView[];
  selected: number | null;
  docsPage: DocsPageView | null;
  dendrogram: DendrogramData | null;
  expandedNodes: Set<number>;
  bannerError: string | null;
  inlineError: string | null;
  exportResult: ExportResult | null;
  exportError: { detail: string; unlabeled: number[] } | null;
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

export class ReviewApp {
  root: HTMLElement;
  state: AppState = {
    session: null,
    clusters: [],
    selected: null,
    docsPage: null,
    dendrogram: null,
    expandedNodes: new Set(),
    bannerError: null,
    inlineError: null,
    exportResult: null,
    exportError: null,
  };

  constructor(root: HTMLElement) {
    this.root = root;
  }

  async start(): Promise<void> {
    await this.refresh();
  }

  /** Refetch server truth and re-render; the only way state updates. */
  async refresh(): Promise<void> {
    try {
      const session = await api.session();
      const clusters = (await api.clusters()).clusters;
      this.state.session = session;
      this.state.clusters = clusters;
      this.state.bannerError = null;
      if (this.state.dendrogram === null) {
        this.state.dendrogram = await api.dendrogram();
        this.state.expandedNodes = initiallyExpanded(this.state.dendrogram);
      }
      const ids = new Set(clusters.map((c) => c.id));
      if (this.state.selected !== null && !ids.has(this.state.selected)) {
        this.state.selected = null;
        this.state.docsPage = null;
      }
      if (this.state.selected !== null) {
        await this.loadDocs(this.state.selected, this.state.docsPage?.page ?? 0);
      }
    } catch (err) {
      this.state.bannerError = err instanceof Error ? err.message : String(err);
    }
    this.render();
  }

  async loadDocs(cluster: number, page: number): Promise<void> {
    const data = await api.clusterDocs(cluster, page, PAGE_SIZE);
    this.state.docsPage = {
      cluster: data.cluster,
      page: data.page,
      total: data.total,
      docs: data.docs,
    };
  }

  async selectCluster(id: number): Promise<void> {
    this.state.selected = id;
    this.state.inlineError = null;
    try {
      await this.loadDocs(id, 0);
    } catch (err) {
      this.state.bannerError = err instanceof Error ? err.message : String(err);
    }
    this.render();
  }

  async turnPage(delta: number): Promise<void> {
    if (!this.state.docsPage || this.state.selected === null) return;
    const next = this.state.docsPage.page + delta;
    try {
      await this.loadDocs(this.state.selected, next);
    } catch (err) {
      this.state.bannerError = err instanceof Error ? err.message : String(err);
    }
    this.render();
  }

  async assignLabel(cluster: number, label: string): Promise<void> {
    if (!label.trim()) {
      this.state.inlineError = "label must not be empty";
      this.render();
      return;
    }
    try {
      await api.assignLabel(cluster, label.trim());
    } catch (err) {
      // server refused: show the message, leave all state untouched
      this.state.inlineError =
        err instanceof ApiError ? err.message : "labeling failed";
      this.render();
      return;
    }
    this.state.inlineError = null;
    await this.refresh();
  }

  async applyCut(k: number): Promise<void> {
    if (!Number.isInteger(k) || k < 1) {
      this.state.inlineError = "k must be a positive integer";
      this.render();
      return;
    }
    const ok = window.confirm(
      `Re-cut the dendrogram at k=${k}? Labels on clusters that no longer exist are dropped.`,
    );
    if (!ok) {
      this.render();
      return;
    }
    try {
      await api.cut(k);
    } catch (err) {
      this.state.inlineError = err instanceof ApiError ? err.message : "cut failed";
      this.render();
      return;
    }
    this.state.exportResult = null;
    this.state.exportError = null;
    await this.refresh();
  }

  async doExport(): Promise<void> {
    try {
      this.state.exportResult = await api.exportDataset();
      this.state.exportError = null;
    } catch (err) {
      this.state.exportResult = null;
      if (err instanceof ApiError && err.status === 409) {
        this.state.exportError = {
          detail: err.payload.detail ?? err.payload.error,
          unlabeled: err.payload.unlabeled ?? [],
        };
      } else {
        this.state.bannerError = err instanceof Error ? err.message : "export failed";
      }
    }
    await this.refresh();
  }

  toggleNode(id: number): void {
    if (this.state.expandedNodes.has(id)) this.state.expandedNodes.delete(id);
    else this.state.expandedNodes.add(id);
    this.render();
  }

  // ------------------------------------------------------------------
  // rendering

  render(): void {
    this.root.replaceChildren();
    if (this.state.bannerError !== null) {
      this.root.appendChild(this.renderBanner(this.state.bannerError));
    }
    if (this.state.session === null) return;
    this.root.appendChild(this.renderHeader());
    this.root.appendChild(this.renderCategoryGroups());
    const main = el("div", { class: "columns" });
    main.appendChild(this.renderClusterList());
    main.appendChild(this.renderDetail());
    this.root.appendChild(main);
    if (this.state.exportError) this.root.appendChild(this.renderExportError());
    if (this.state.exportResult) this.root.appendChild(this.renderExportResult());
    this.root.appendChild(this.renderDendrogram());
  }

  renderBanner(message: string): HTMLElement {
    const banner = el("div", { class: "banner", "data-testid": "error-banner" });
    banner.appendChild(el("span", {}, `Cannot reach the review service: ${message}`));
    const retry = el("button", { id: "retry" }, "Retry");
    retry.addEventListener("click", () => void this.refresh());
    banner.appendChild(retry);
    return banner;
  }

  renderHeader(): HTMLElement {
    const session = this.state.session!;
    const header = el("header", {});
    header.appendChild(el("h1", {}, "Cluster review"));
    header.appendChild(
      el("span", { "data-testid": "doc-count" }, `${session.n_docs} documents`),
    );
    const kInput = el("input", {
      id: "k-input",
      type: "number",
      min: "1",
      value: String(session.k),
    });
    const kApply = el("button", { id: "apply-cut" }, "Apply cut");
    kApply.addEventListener("click", () => {
      void this.applyCut(Number((kInput as HTMLInputElement).value));
    });
    const exportBtn = el("button", { id: "export" }, "Export labeled dataset");
    exportBtn.addEventListener("click", () => void this.doExport());
    const controls = el("div", { class: "controls" });
    controls.append(el("label", { for: "k-input" }, "k"), kInput, kApply, exportBtn);
    header.appendChild(controls);
    return header;
  }

  /** Clusters sharing one label render as a single category group. */
  renderCategoryGroups(): HTMLElement {
    const wrap = el("div", { class: "groups", "data-testid": "category-groups" });
    const groups = new Map<string, { size: number; clusters: number[] }>();
    for (const c of this.state.clusters) {
      if (!c.label) continue;
      const entry = groups.get(c.label) ?? { size: 0, clusters: [] };
      entry.size += c.size;
      entry.clusters.push(c.id);
      groups.set(c.label, entry);
    }
    for (const [label, entry] of [...groups.entries()].sort()) {
      const chip = el("span", { class: "group", "data-testid": `group-${label}` });
      chip.textContent = `${label}: ${entry.size} docs in ${entry.clusters.length} cluster(s)`;
      wrap.appendChild(chip);
    }
    return wrap;
  }

  renderClusterList(): HTMLElement {
    const list = el("section", { class: "cluster-list", "data-testid": "cluster-list" });
    list.appendChild(el("h2", {}, `Clusters (k=${this.state.session!.k})`));
    const sorted = [...this.state.clusters].sort((a, b) => b.size - a.size);
    for (const cluster of sorted) {
      const row = el("div", {
        class: "cluster-row" + (cluster.id === this.state.selected ? " selected" : ""),
        "data-testid": `cluster-row-${cluster.id}`,
      });
      row.appendChild(el("span", { class: "cluster-id" }, `#${cluster.id}`));
      row.appendChild(
        el("span", { class: "cluster-size", "data-testid": `cluster-size-${cluster.id}` },
           `${cluster.size} docs`),
      );
      const preview = cluster.top_terms.slice(0, 3).map(([t]) => t).join(", ");
      row.appendChild(el("span", { class: "terms-preview" }, preview));
      if (cluster.label) {
        row.appendChild(
          el("span", { class: "label-badge", "data-testid": `label-badge-${cluster.id}` },
             cluster.label),
        );
      }
      row.addEventListener("click", () => void this.selectCluster(cluster.id));
      list.appendChild(row);
    }
    return list;
  }

  renderDetail(): HTMLElement {
    const panel = el("section", { class: "detail", "data-testid": "detail" });
    if (this.state.selected === null) {
      panel.appendChild(el("p", {}, "Select a cluster to inspect it."));
      return panel;
    }
    const cluster = this.state.clusters.find((c) => c.id === this.state.selected);
    if (!cluster) return panel;
    panel.appendChild(el("h2", {}, `Cluster #${cluster.id} (${cluster.size} docs)`));

    const terms = el("ul", { class: "top-terms" });
    for (const [term, score] of cluster.top_terms) {
      terms.appendChild(el("li", {}, `${term} (${score.toFixed(4)})`));
    }
    panel.appendChild(terms);

    const form = el("div", { class: "label-form" });
    const input = el("input", {
      id: "label-input",
      type: "text",
      placeholder: "category name",
      value: cluster.label ?? "",
    });
    const button = el("button", { id: "assign-label" }, "Assign label");
    button.addEventListener("click", () => {
      void this.assignLabel(cluster.id, (input as HTMLInputElement).value);
    });
    form.append(input, button);
    if (this.state.inlineError) {
      form.appendChild(
        el("span", { class: "inline-error", "data-testid": "inline-error" },
           this.state.inlineError),
      );
    }
    panel.appendChild(form);

    const docsPage = this.state.docsPage;
    if (docsPage && docsPage.cluster === cluster.id) {
      const docs = el("div", { class: "docs" });
      for (const doc of docsPage.docs) {
        const card = el("div", { class: "doc", "data-testid": `doc-${doc.id}` });
        card.appendChild(el("strong", {}, doc.id));
        card.appendChild(el("p", {}, doc.excerpt + (doc.truncated ? " …" : "")));
        docs.appendChild(card);
      }
      panel.appendChild(docs);

      const lastPage = Math.max(0, Math.ceil(docsPage.total / PAGE_SIZE) - 1);
      const pager = el("div", { class: "pager" });
      const prev = el("button", { id: "prev-page" }, "Previous");
      const next = el("button", { id: "next-page" }, "Next");
      if (docsPage.page <= 0) prev.setAttribute("disabled", "");
      if (docsPage.page >= lastPage) next.setAttribute("disabled", "");
      prev.addEventListener("click", () => void this.turnPage(-1));
      next.addEventListener("click", () => void this.turnPage(1));
      pager.append(
        prev,
        el("span", { "data-testid": "page-indicator" },
           `page ${docsPage.page + 1} of ${lastPage + 1}`),
        next,
      );
      panel.appendChild(pager);
    }
    return panel;
  }

  renderExportError(): HTMLElement {
    const box = el("div", { class: "export-error", "data-testid": "export-error" });
    box.appendChild(el("p", {}, `Export refused: ${this.state.exportError!.detail}`));
    for (const id of this.state.exportError!.unlabeled) {
      const link = el("button", { class: "unlabeled-link", "data-cluster": String(id) },
                      `label cluster #${id}`);
      link.addEventListener("click", () => void this.selectCluster(id));
      box.appendChild(link);
    }
    return box;
  }

  renderExportResult(): HTMLElement {
    const result = this.state.exportResult!;
    const box = el("div", { class: "export-result", "data-testid": "export-result" });
    box.appendChild(el("h2", {}, `Exported ${result.total} documents to ${result.path}`));
    const table = el("table", { id: "export-manifest" });
    const head = el("tr", {});
    head.append(el("th", {}, "Category"), el("th", {}, "Count"), el("th", {}, "Percentage"));
    table.appendChild(head);
    for (const category of result.categories) {
      const row = el("tr", { "data-testid": `manifest-row-${category}` });
      row.append(
        el("td", {}, category),
        el("td", {}, String(result.counts[category])),
        el("td", {}, `${result.percentages[category].toFixed(2)}%`),
      );
      table.appendChild(row);
    }
    box.appendChild(table);
    return box;
  }

  renderDendrogram(): HTMLElement {
    const panel = el("section", { class: "dendro", "data-testid": "dendrogram" });
    panel.appendChild(el("h2", {}, "Dendrogram"));
    if (!this.state.dendrogram) return panel;
    const root = buildTree(this.state.dendrogram);
    panel.appendChild(this.renderNode(root));
    return panel;
  }

  renderNode(node: TreeNode): HTMLElement {
    const isLeaf = node.left === null && node.right === null;
    const item = el("div", { class: "node", "data-node": String(node.id) });
    if (isLeaf) {
      item.appendChild(el("span", { class: "leaf" }, `leaf ${node.id}`));
      return item;
    }
    const headline = el("span", { class: "merge" },
                        `node ${node.id}: ${node.size} docs @ h=${node.height.toFixed(3)}`);
    item.appendChild(headline);
    if (this.state.expandedNodes.has(node.id)) {
      const toggle = el("button", { class: "collapse-node", "data-id": String(node.id) }, "▾");
      toggle.addEventListener("click", () => this.toggleNode(node.id));
      item.appendChild(toggle);
      const children = el("div", { class: "children" });
      if (node.left) children.appendChild(this.renderNode(node.left));
      if (node.right) children.appendChild(this.renderNode(node.right));
      item.appendChild(children);
    } else {
      const toggle = el("button", { class: "expand-node", "data-id": String(node.id) }, "▸");
      toggle.addEventListener("click", () => this.toggleNode(node.id));
      item.appendChild(toggle);
    }
    return item;
  }
}
