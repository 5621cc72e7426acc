/** Parsing and validation of `adaptive-test/v1` deployment files. */

import type { DeploymentTest, ItemDef, TreeNode } from "./types";
import { isLeaf } from "./types";

export class DeploymentError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "DeploymentError";
  }
}

function fail(message: string): never {
  throw new DeploymentError(message);
}

function checkNode(node: unknown, index: number): TreeNode {
  if (typeof node !== "object" || node === null) fail(`node ${index}: not an object`);
  const n = node as Record<string, unknown>;
  if (typeof n.id !== "number") fail(`node ${index}: missing numeric id`);
  if (typeof n.leaf_prob === "number") {
    if (n.leaf_prob < 0 || n.leaf_prob > 1) {
      fail(`node ${n.id}: leaf probability ${n.leaf_prob} outside [0, 1]`);
    }
    return { id: n.id, leaf_prob: n.leaf_prob };
  }
  if (
    typeof n.item !== "string" ||
    typeof n.cutpoint !== "number" ||
    typeof n.left !== "number" ||
    typeof n.right !== "number"
  ) {
    fail(`node ${n.id}: split node needs item, cutpoint, left, right`);
  }
  return { id: n.id, item: n.item, cutpoint: n.cutpoint, left: n.left, right: n.right };
}

/**
 * Validate a parsed JSON document as a deployment file.
 *
 * Checks the schema tag, item declarations, node references, and that every
 * root-to-leaf path uses at most `maxipp` distinct items.
 */
export function parseDeployment(doc: unknown): DeploymentTest {
  if (typeof doc === "string") {
    try {
      doc = JSON.parse(doc);
    } catch (e) {
      fail(`deployment file is not valid JSON: ${(e as Error).message}`);
    }
  }
  if (typeof doc !== "object" || doc === null) fail("deployment file is not an object");
  const d = doc as Record<string, unknown>;
  if (d.schema !== "adaptive-test/v1") {
    fail(`unsupported schema ${JSON.stringify(d.schema)}`);
  }
  if (typeof d.maxipp !== "number" || d.maxipp < 1) fail("maxipp must be a positive number");
  if (typeof d.threshold !== "number" || d.threshold < 0 || d.threshold > 1) {
    fail("threshold must lie in [0, 1]");
  }
  if (!Array.isArray(d.items) || d.items.length === 0) fail("items list is empty");
  const items: ItemDef[] = d.items.map((it: unknown, i: number) => {
    const o = it as Record<string, unknown>;
    if (typeof o?.id !== "string" || typeof o.text !== "string" || !Array.isArray(o.levels)) {
      fail(`item ${i}: needs id, text, levels`);
    }
    if (o.levels.length < 2) fail(`item ${o.id}: needs >= 2 response levels`);
    const levels = o.levels.map((lv: unknown, j: number) => {
      const l = lv as Record<string, unknown>;
      if (typeof l?.code !== "number" || typeof l.label !== "string") {
        fail(`item ${o.id} level ${j}: needs numeric code and label`);
      }
      return { code: l.code, label: l.label };
    });
    return { id: o.id, text: o.text, levels };
  });
  const itemIds = new Set(items.map((it) => it.id));
  if (itemIds.size !== items.length) fail("duplicate item ids");

  if (!Array.isArray(d.nodes) || d.nodes.length === 0) fail("node list is empty");
  const nodes = d.nodes.map(checkNode);
  const byId = new Map(nodes.map((n) => [n.id, n]));
  if (byId.size !== nodes.length) fail("duplicate node ids");
  for (const n of nodes) {
    if (isLeaf(n)) continue;
    if (!itemIds.has(n.item)) fail(`node ${n.id}: splits on undeclared item ${n.item}`);
    if (!byId.has(n.left) || !byId.has(n.right)) {
      fail(`node ${n.id}: child reference outside the node list`);
    }
  }

  const p = d.provenance as Record<string, unknown> | undefined;
  if (typeof p?.content_hash !== "string") fail("missing provenance content_hash");

  const test: DeploymentTest = {
    schema: "adaptive-test/v1",
    maxipp: d.maxipp,
    threshold: d.threshold,
    items,
    nodes,
    provenance: {
      training_hash: typeof p.training_hash === "string" ? p.training_hash : "",
      seed: typeof p.seed === "number" ? p.seed : 0,
      content_hash: p.content_hash,
    },
  };
  verifyPaths(test);
  return test;
}

export function rootId(test: DeploymentTest): number {
  return Math.min(...test.nodes.map((n) => n.id));
}

export function nodeById(test: DeploymentTest, id: number): TreeNode {
  const node = test.nodes.find((n) => n.id === id);
  if (!node) throw new DeploymentError(`node ${id} not in the deployment file`);
  return node;
}

export function itemById(test: DeploymentTest, id: string): ItemDef {
  const item = test.items.find((it) => it.id === id);
  if (!item) throw new DeploymentError(`item ${id} not declared in the deployment file`);
  return item;
}

/** Reject files whose tree violates its own maxipp, or that contain a cycle. */
function verifyPaths(test: DeploymentTest): void {
  const stack: Array<{ id: number; items: Set<string>; depth: number }> = [
    { id: rootId(test), items: new Set(), depth: 0 },
  ];
  while (stack.length > 0) {
    const { id, items, depth } = stack.pop()!;
    if (depth > test.nodes.length) fail("node graph contains a cycle");
    const node = nodeById(test, id);
    if (isLeaf(node)) continue;
    const next = items.has(node.item) ? items : new Set(items).add(node.item);
    if (next.size > test.maxipp) {
      fail(`path through node ${node.id} uses ${next.size} items, above maxipp ${test.maxipp}`);
    }
    stack.push({ id: node.left, items: next, depth: depth + 1 });
    stack.push({ id: node.right, items: next, depth: depth + 1 });
  }
}
