// Behavior tests for the review UI, driven in a headless DOM (jsdom)
// against a scripted in-memory review service. The final test is the
// UI-state-fidelity acceptance criterion: whatever mutations run, the
// rendered counts must equal a fresh /api/session fetch.

import { beforeEach, describe, expect, it, vi } from "vitest";

import { ReviewApp } from "../src/app.js";
import { initiallyExpanded } from "../src/dendro.js";
import { FakeServer } from "./fake-server.js";

let server: FakeServer;
let app: ReviewApp;
let root: HTMLElement;

function byTestId(id: string): HTMLElement {
  const node = root.querySelector(`[data-testid="${id}"]`);
  if (!node) throw new Error(`missing [data-testid=${id}]`);
  return node as HTMLElement;
}

function maybeTestId(id: string): HTMLElement | null {
  return root.querySelector(`[data-testid="${id}"]`) as HTMLElement | null;
}

function click(selector: string): void {
  const node = root.querySelector(selector);
  if (!node) throw new Error(`missing ${selector}`);
  (node as HTMLElement).click();
}

async function settle(): Promise<void> {
  // drain the microtask queue a few times so fired handlers finish
  for (let i = 0; i < 8; i++) await Promise.resolve();
  await new Promise((resolve) => setTimeout(resolve, 0));
}

async function freshApp(nDocs = 45, k = 4): Promise<void> {
  server = new FakeServer(nDocs, k);
  vi.stubGlobal("fetch", server.fetch);
  vi.spyOn(window, "confirm").mockReturnValue(true);
  document.body.innerHTML = '<div id="app"></div>';
  root = document.getElementById("app")!;
  app = new ReviewApp(root);
  await app.start();
}

beforeEach(async () => {
  vi.restoreAllMocks();
  await freshApp();
});

describe("cluster browser", () => {
  it("lists clusters sorted by size descending", () => {
    const rows = [...root.querySelectorAll(".cluster-row")];
    const sizes = rows.map((r) =>
      Number(r.querySelector(".cluster-size")!.textContent!.split(" ")[0]),
    );
    expect(sizes).toEqual([...sizes].sort((a, b) => b - a));
    expect(sizes.reduce((a, b) => a + b, 0)).toBe(45);
  });

  it("shows top terms and paginated excerpts for a selected cluster", async () => {
    await app.selectCluster(0);
    expect(byTestId("detail").textContent).toContain("term0a");
    expect(byTestId("page-indicator").textContent).toBe("page 1 of 2");
    expect(root.querySelectorAll(".doc").length).toBe(10);
  });

  it("disables next on the last page and prev on the first", async () => {
    await app.selectCluster(0); // 12 docs -> 2 pages of 10
    expect((root.querySelector("#prev-page") as HTMLButtonElement).disabled).toBe(true);
    expect((root.querySelector("#next-page") as HTMLButtonElement).disabled).toBe(false);
    click("#next-page");
    await settle();
    expect(byTestId("page-indicator").textContent).toBe("page 2 of 2");
    expect((root.querySelector("#next-page") as HTMLButtonElement).disabled).toBe(true);
    expect((root.querySelector("#prev-page") as HTMLButtonElement).disabled).toBe(false);
  });

  it("reconciles after a server-side k change", async () => {
    server.state.k = 6; // out-of-band change
    await app.assignLabel(0, "whatever"); // any mutation refetches
    expect((root.querySelector("#k-input") as HTMLInputElement).value).toBe("6");
    expect(root.querySelectorAll(".cluster-row").length).toBe(6);
  });
});

describe("labeling", () => {
  it("rejects an empty label client-side without calling the server", async () => {
    await app.selectCluster(1);
    const posts = server.requests.filter((r) => r.startsWith("POST"));
    await app.assignLabel(1, "   ");
    expect(byTestId("inline-error").textContent).toContain("empty");
    expect(server.requests.filter((r) => r.startsWith("POST"))).toEqual(posts);
  });

  it("shows the badge after the server acknowledges", async () => {
    await app.selectCluster(2);
    await app.assignLabel(2, "personal_scams");
    expect(byTestId("label-badge-2").textContent).toBe("personal_scams");
    expect(server.state.labelMap.get(2)).toBe("personal_scams");
  });

  it("groups identical labels with summed counts", async () => {
    await app.assignLabel(0, "adult");
    await app.assignLabel(1, "adult");
    const sizes = server.clusterSizes(server.state.k);
    const chip = byTestId("group-adult");
    expect(chip.textContent).toContain(`${sizes[0] + sizes[1]} docs`);
    expect(chip.textContent).toContain("2 cluster(s)");
  });

  it("keeps state untouched when the server refuses", async () => {
    await app.selectCluster(3);
    server.state.k = 2; // cluster 3 vanishes server-side
    await app.assignLabel(3, "ghost");
    expect(byTestId("inline-error").textContent).toContain("no cluster 3");
    // no badge appeared anywhere, no label stored
    expect(root.querySelector(".label-badge")).toBeNull();
    expect(server.state.labelMap.size).toBe(0);
  });
});

describe("cut selection", () => {
  it("asks for confirmation and aborts when declined", async () => {
    (window.confirm as ReturnType<typeof vi.fn>).mockReturnValue(false);
    const posts = server.requests.filter((r) => r.includes("/api/cut"));
    await app.applyCut(2);
    expect(server.requests.filter((r) => r.includes("/api/cut"))).toEqual(posts);
    expect(server.state.k).toBe(4);
  });

  it("applies the cut and drops labels on vanished clusters", async () => {
    await app.assignLabel(0, "keep");
    await app.assignLabel(3, "vanishes");
    await app.applyCut(2);
    expect(server.state.k).toBe(2);
    expect(root.querySelectorAll(".cluster-row").length).toBe(2);
    expect(maybeTestId("label-badge-0")!.textContent).toBe("keep");
    expect(maybeTestId("label-badge-3")).toBeNull();
    expect(maybeTestId("group-vanishes")).toBeNull();
  });
});

describe("export flow", () => {
  it("lists unlabeled clusters as actionable links on 409", async () => {
    await app.assignLabel(0, "done");
    await app.doExport();
    const links = [...root.querySelectorAll(".unlabeled-link")];
    expect(links.map((l) => l.getAttribute("data-cluster"))).toEqual(["1", "2", "3"]);
    (links[1] as HTMLElement).click();
    await settle();
    expect(byTestId("cluster-row-2").classList.contains("selected")).toBe(true);
  });

  it("renders the manifest table with percentages summing to 100", async () => {
    await app.assignLabel(0, "health");
    await app.assignLabel(1, "scams");
    await app.assignLabel(2, "scams");
    await app.assignLabel(3, "adult");
    await app.doExport();
    const table = root.querySelector("#export-manifest")!;
    const rows = [...table.querySelectorAll("tr")].slice(1);
    expect(rows.length).toBe(3);
    const sizes = server.clusterSizes(4);
    expect(byTestId("manifest-row-scams").textContent).toContain(String(sizes[1] + sizes[2]));
    const pctSum = rows
      .map((r) => Number(r.children[2].textContent!.replace("%", "")))
      .reduce((a, b) => a + b, 0);
    expect(Math.abs(pctSum - 100)).toBeLessThanOrEqual(0.01);
  });
});

describe("service failures", () => {
  it("shows an error banner with a retry affordance", async () => {
    server.state.offline = true;
    await app.refresh();
    expect(byTestId("error-banner").textContent).toContain("Cannot reach");
    server.state.offline = false;
    click("#retry");
    await settle();
    expect(maybeTestId("error-banner")).toBeNull();
    expect(root.querySelectorAll(".cluster-row").length).toBe(4);
  });
});

describe("dendrogram explorer", () => {
  it("expands only the tallest nodes initially", () => {
    const merges: [number, number, number, number][] = [];
    for (let step = 0; step < 299; step++) {
      merges.push([step === 0 ? 0 : 300 + step - 1, step + 1, step + 1, step + 2]);
    }
    const expanded = initiallyExpanded({ n_leaves: 300, merges }, 200);
    expect(expanded.size).toBe(200);
    // the tallest internal nodes are the last-created ones
    expect(expanded.has(300 + 298)).toBe(true);
    expect(expanded.has(300)).toBe(false);
  });

  it("collapses and expands nodes on demand", async () => {
    const panel = byTestId("dendrogram");
    const before = panel.querySelectorAll(".node").length;
    const collapse = panel.querySelector(".collapse-node") as HTMLElement;
    collapse.click();
    await settle();
    const collapsedCount = byTestId("dendrogram").querySelectorAll(".node").length;
    expect(collapsedCount).toBeLessThan(before);
    const expand = byTestId("dendrogram").querySelector(".expand-node") as HTMLElement;
    expand.click();
    await settle();
    expect(byTestId("dendrogram").querySelectorAll(".node").length).toBe(before);
  });
});

describe("acceptance: ui state fidelity", () => {
  async function assertMatchesFreshSession(): Promise<void> {
    // fresh fetches straight from the service, bypassing the app
    const session = await (await server.fetch("/api/session")).json();
    const clusters = (await (await server.fetch("/api/clusters")).json()).clusters as {
      id: number;
      size: number;
      label: string | null;
    }[];

    expect((root.querySelector("#k-input") as HTMLInputElement).value)
      .toBe(String(session.k));
    expect(byTestId("doc-count").textContent).toContain(String(session.n_docs));
    expect(root.querySelectorAll(".cluster-row").length).toBe(session.k);

    // every rendered badge matches the server label map, and vice versa
    for (const cluster of clusters) {
      const badge = maybeTestId(`label-badge-${cluster.id}`);
      const expected = session.label_map[String(cluster.id)] ?? null;
      expect(badge?.textContent ?? null).toBe(expected);
      expect(byTestId(`cluster-size-${cluster.id}`).textContent)
        .toBe(`${cluster.size} docs`);
    }
    // group chips recompute from server truth
    const groups = new Map<string, number>();
    for (const cluster of clusters) {
      if (cluster.label) {
        groups.set(cluster.label, (groups.get(cluster.label) ?? 0) + cluster.size);
      }
    }
    for (const [label, size] of groups) {
      expect(byTestId(`group-${label}`).textContent).toContain(`${size} docs`);
    }
    expect(root.querySelectorAll(".group").length).toBe(groups.size);
  }

  it("rendered counts equal a fresh /api/session fetch after any mutation sequence", async () => {
    const script: (() => Promise<void>)[] = [
      () => app.assignLabel(0, "alpha"),
      () => app.assignLabel(1, "beta"),
      () => app.assignLabel(2, "alpha"),
      () => app.applyCut(3),
      () => app.assignLabel(2, "gamma"),
      () => app.doExport(),
      () => app.applyCut(5),
      () => app.assignLabel(4, "delta"),
      () => app.applyCut(2),
      () => app.assignLabel(1, "omega"),
    ];
    for (const step of script) {
      await step();
      await assertMatchesFreshSession();
    }
  });

  it("holds under a randomized mutation sequence", async () => {
    let seed = 1234;
    const rand = () => {
      // deterministic LCG so failures reproduce
      seed = (seed * 1103515245 + 12345) % 2147483648;
      return seed / 2147483648;
    };
    for (let step = 0; step < 25; step++) {
      const roll = rand();
      if (roll < 0.5) {
        const cid = Math.floor(rand() * server.state.k);
        await app.assignLabel(cid, `cat${Math.floor(rand() * 4)}`);
      } else if (roll < 0.8) {
        await app.applyCut(1 + Math.floor(rand() * 8));
      } else {
        await app.doExport();
      }
      await assertMatchesFreshSession();
    }
  });
});
