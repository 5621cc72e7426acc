export type {
  Answer,
  DeploymentTest,
  ItemDef,
  ItemLevel,
  LeafNode,
  SessionLog,
  SessionResult,
  SessionState,
  SplitNode,
  TreeNode,
} from "./types";
export { isLeaf } from "./types";
export { DeploymentError, itemById, nodeById, parseDeployment, rootId } from "./deployment";
export {
  SessionError,
  ValidationError,
  answer,
  exportSession,
  nextItem,
  replay,
  startSession,
} from "./session";
