/**
 * Frame types for the engine wire protocol (proto 1).
 *
 * Frames are single-line JSON documents over a local TCP socket, strictly
 * request-reply ordered. See docs/bridge.md in the engine repository for
 * the full schema.
 */

export const PROTO_VERSION = 1;

/** "ALL" means the full action alphabet (no restriction, never enforced). */
export type Mask = string[] | "ALL";

export interface HelloRequest {
  proto: typeof PROTO_VERSION;
  type: "hello";
  agents: string[];
  obs_labels: Record<string, string[]>;
  act_labels: Record<string, string[]>;
  seed: number;
}

export interface HelloReply {
  type: "hello";
  ok: true;
  agents: string[];
}

export interface ResetRequest {
  type: "reset";
  episode: number;
}

export interface ResetReply {
  type: "reset";
  ok: true;
  episode: number;
}

export interface MaskRequest {
  type: "mask";
  agent: string;
  obs: string;
}

export interface MaskReply {
  type: "mask";
  mask: Mask;
  enforced: boolean;
}

export interface StepRequest {
  type: "step";
  agent: string;
  obs: string;
  proposed_action: string;
  raw_reward: number;
}

export interface StepReply {
  type: "step";
  mask: Mask;
  enforced: boolean;
  /** penalty + bonus; add to the raw reward. */
  reshaped_reward_delta: number;
  penalty: number;
  bonus: number;
  /** raw_reward + reshaped_reward_delta, echoed by the engine. */
  reward: number;
}

export type ErrorCode =
  | "bad_json"
  | "bad_frame"
  | "bad_proto"
  | "protocol_order"
  | "unknown_type"
  | "unknown_agent"
  | "alphabet_mismatch"
  | "mask_violation";

export interface ErrorReply {
  type: "error";
  error: ErrorCode;
  detail?: unknown;
  /** Present on mask_violation so the client can re-sample. */
  mask?: Mask;
  enforced?: boolean;
}

export type Request = HelloRequest | ResetRequest | MaskRequest | StepRequest;
export type Reply = HelloReply | ResetReply | MaskReply | StepReply | ErrorReply;

export function isError(reply: Reply): reply is ErrorReply {
  return reply.type === "error";
}

export function maskAllows(mask: Mask, action: string): boolean {
  return mask === "ALL" || mask.includes(action);
}
