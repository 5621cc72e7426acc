/**
 * Session engine: one live administration of an adaptive test.
 *
 * States are immutable; every transition returns a new state. After every
 * transition the session auto-routes through nodes whose item was already
 * answered, so each distinct item is asked exactly once and no session ever
 * asks more than the test's maxipp questions.
 */

import type {
  Answer,
  DeploymentTest,
  ItemDef,
  SessionLog,
  SessionResult,
  SessionState,
} from "./types";
import { isLeaf } from "./types";
import { itemById, nodeById, parseDeployment, rootId } from "./deployment";

export class SessionError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SessionError";
  }
}

/** Rejected answer: the message is meant for inline display; state is unchanged. */
export class ValidationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ValidationError";
  }
}

function classify(leafProb: number, threshold: number): SessionResult {
  return { leafProb, riskClass: leafProb >= threshold ? 1 : 0, threshold };
}

/** Follow stored answers through re-split items; finish if a leaf is reached. */
function advance(state: SessionState): SessionState {
  let { currentNodeId } = state;
  const path = [...state.path];
  let node = nodeById(state.test, currentNodeId);
  while (!isLeaf(node)) {
    const split = node;
    const prior = state.answered.find((a) => a.itemId === split.item);
    if (!prior) break;
    currentNodeId = prior.code <= split.cutpoint ? split.left : split.right;
    path.push(currentNodeId);
    node = nodeById(state.test, currentNodeId);
  }
  if (isLeaf(node)) {
    return {
      ...state,
      currentNodeId,
      path,
      finished: true,
      result: classify(node.leaf_prob, state.test.threshold),
    };
  }
  return { ...state, currentNodeId, path };
}

/** Load a deployment document (object or JSON text) and start at the root. */
export function startSession(doc: unknown): SessionState {
  const test = parseDeployment(doc);
  const root = rootId(test);
  return advance({
    test,
    currentNodeId: root,
    answered: [],
    path: [root],
    finished: false,
  });
}

/** The question to present now, or the terminal result once finished. */
export function nextItem(
  state: SessionState
): { done: false; item: ItemDef } | { done: true; result: SessionResult } {
  if (state.finished) {
    return { done: true, result: state.result! };
  }
  const node = nodeById(state.test, state.currentNodeId);
  if (isLeaf(node)) throw new SessionError("unfinished session stopped at a leaf");
  return { done: false, item: itemById(state.test, node.item) };
}

/** Record an answer to the current question and route down the tree. */
export function answer(state: SessionState, code: number): SessionState {
  if (state.finished) throw new SessionError("session already finished");
  const node = nodeById(state.test, state.currentNodeId);
  if (isLeaf(node)) throw new SessionError("unfinished session stopped at a leaf");
  const item = itemById(state.test, node.item);
  if (!item.levels.some((lv) => lv.code === code)) {
    const valid = item.levels.map((lv) => lv.code).join(", ");
    throw new ValidationError(`${code} is not a response level of ${item.id} (valid: ${valid})`);
  }
  const nextId = code <= node.cutpoint ? node.left : node.right;
  return advance({
    ...state,
    currentNodeId: nextId,
    answered: [...state.answered, { itemId: item.id, code }],
    path: [...state.path, nextId],
  });
}

/** Serializable log of a finished session. */
export function exportSession(state: SessionState, now: Date = new Date()): SessionLog {
  if (!state.finished || !state.result) {
    throw new SessionError("cannot export an unfinished session");
  }
  return {
    schema: "session-log/v1",
    answers: state.answered.map((a) => ({ ...a })),
    path: [...state.path],
    result: { ...state.result },
    testHash: state.test.provenance.content_hash,
    timestamp: now.toISOString(),
  };
}

/** Re-run a session log against a deployment file; must reach the same result. */
export function replay(log: SessionLog, doc: unknown): SessionState {
  let state = startSession(doc);
  if (log.testHash !== state.test.provenance.content_hash) {
    throw new SessionError(
      `log was recorded against test ${log.testHash}, not ${state.test.provenance.content_hash}`
    );
  }
  const remaining: Answer[] = [...log.answers];
  while (!state.finished) {
    const step = nextItem(state);
    if (step.done) break;
    const recorded = remaining.shift();
    if (!recorded || recorded.itemId !== step.item.id) {
      throw new SessionError(`log expects ${recorded?.itemId ?? "nothing"}, test asks ${step.item.id}`);
    }
    state = answer(state, recorded.code);
  }
  const result = state.result!;
  if (
    result.leafProb !== log.result.leafProb ||
    result.riskClass !== log.result.riskClass ||
    state.currentNodeId !== log.path[log.path.length - 1]
  ) {
    throw new SessionError("replay reached a different leaf than the log records");
  }
  return state;
}
