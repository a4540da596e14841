// Dendrogram tree assembly for the collapsible explorer. With thousands
// of leaves the tree cannot render flat, so only the tallest internal
// nodes are expanded initially and the rest unfold on demand.

import type { DendrogramData } from "./api.js";

export type TreeNode = {
  id: number;
  height: number;
  size: number;
  left: TreeNode | null;
  right: TreeNode | null;
};

export const INITIAL_VISIBLE_NODES = 200;

export function buildTree(data: DendrogramData): TreeNode {
  const nodes = new Map<number, TreeNode>();
  for (let i = 0; i < data.n_leaves; i++) {
    nodes.set(i, { id: i, height: 0, size: 1, left: null, right: null });
  }
  data.merges.forEach(([left, right, height, size], step) => {
    const id = data.n_leaves + step;
    nodes.set(id, {
      id,
      height,
      size,
      left: nodes.get(left) ?? null,
      right: nodes.get(right) ?? null,
    });
  });
  const root = nodes.get(data.n_leaves + data.merges.length - 1);
  if (!root) throw new Error("dendrogram has no merges");
  return root;
}

/** Ids of the `limit` tallest internal nodes: the initially-expanded set. */
export function initiallyExpanded(data: DendrogramData, limit = INITIAL_VISIBLE_NODES): Set<number> {
  const byHeight = data.merges
    .map(([, , height], step) => ({ id: data.n_leaves + step, height }))
    .sort((a, b) => b.height - a.height)
    .slice(0, limit);
  return new Set(byHeight.map((n) => n.id));
}
