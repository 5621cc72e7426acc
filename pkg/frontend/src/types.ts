/** Shapes of the `adaptive-test/v1` deployment file and of session state. */

export interface ItemLevel {
  code: number;
  label: string;
}

export interface ItemDef {
  id: string;
  text: string;
  levels: ItemLevel[];
}

/** Internal node: route left iff the answered code is <= cutpoint. */
export interface SplitNode {
  id: number;
  item: string;
  cutpoint: number;
  left: number;
  right: number;
}

export interface LeafNode {
  id: number;
  leaf_prob: number;
}

export type TreeNode = SplitNode | LeafNode;

export interface DeploymentTest {
  schema: "adaptive-test/v1";
  maxipp: number;
  threshold: number;
  items: ItemDef[];
  nodes: TreeNode[];
  provenance: {
    training_hash: string;
    seed: number;
    content_hash: string;
  };
}

export interface Answer {
  itemId: string;
  code: number;
}

export interface SessionResult {
  /** At-risk probability stored in the reached leaf. */
  leafProb: number;
  /** 1 ("at-risk") iff leafProb >= threshold, else 0. */
  riskClass: 0 | 1;
  threshold: number;
}

export interface SessionState {
  test: DeploymentTest;
  /** Node the session is waiting at; a leaf id once finished. */
  currentNodeId: number;
  /** Distinct items answered, in the order they were asked. */
  answered: Answer[];
  /** Node ids visited so far, root first. */
  path: number[];
  finished: boolean;
  /** Present iff finished. */
  result?: SessionResult;
}

export interface SessionLog {
  schema: "session-log/v1";
  answers: Answer[];
  path: number[];
  result: SessionResult;
  /** content_hash of the deployment file the session ran against. */
  testHash: string;
  timestamp: string;
}

export function isLeaf(node: TreeNode): node is LeafNode {
  return (node as LeafNode).leaf_prob !== undefined;
}
