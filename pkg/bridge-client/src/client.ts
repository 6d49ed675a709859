/**
 * Client for the engine wire protocol: newline-delimited JSON frames over a
 * TCP socket, strictly request-reply ordered. The engine owns the per-agent
 * histories and the hardness draws, so this client is stateless beyond the
 * socket; requests are queued so callers may pipeline calls safely.
 */

import * as net from "net";
import {
  ErrorReply,
  HelloReply,
  MaskReply,
  PROTO_VERSION,
  Reply,
  Request,
  ResetReply,
  StepReply,
  isError,
  maskAllows,
} from "./frames";

export class BridgeProtocolError extends Error {
  constructor(public readonly reply: ErrorReply) {
    super(`engine error: ${reply.error}${reply.detail ? ` (${JSON.stringify(reply.detail)})` : ""}`);
  }
}

interface Pending {
  resolve: (reply: Reply) => void;
  reject: (err: Error) => void;
}

export interface HelloOptions {
  agents: string[];
  obsLabels: Record<string, string[]>;
  actLabels: Record<string, string[]>;
  seed?: number;
}

export class BridgeClient {
  private socket: net.Socket;
  private buffer = "";
  private pending: Pending[] = [];
  private closed = false;

  private constructor(socket: net.Socket) {
    this.socket = socket;
    socket.setEncoding("utf-8");
    socket.on("data", (chunk: string) => this.onData(chunk));
    socket.on("error", (err) => this.failAll(err));
    socket.on("close", () => {
      if (!this.closed) {
        this.failAll(new Error("connection closed by engine"));
      }
    });
  }

  static connect(host: string, port: number, timeoutMs = 5000): Promise<BridgeClient> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection({ host, port });
      const timer = setTimeout(() => {
        socket.destroy();
        reject(new Error(`connect timeout after ${timeoutMs}ms`));
      }, timeoutMs);
      socket.once("connect", () => {
        clearTimeout(timer);
        resolve(new BridgeClient(socket));
      });
      socket.once("error", (err) => {
        clearTimeout(timer);
        reject(err);
      });
    });
  }

  private onData(chunk: string): void {
    this.buffer += chunk;
    let index;
    while ((index = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, index).trim();
      this.buffer = this.buffer.slice(index + 1);
      if (!line) continue;
      const waiter = this.pending.shift();
      if (!waiter) continue; // unsolicited frame; protocol is request-reply
      try {
        waiter.resolve(JSON.parse(line) as Reply);
      } catch (err) {
        waiter.reject(err as Error);
      }
    }
  }

  private failAll(err: Error): void {
    const waiting = this.pending;
    this.pending = [];
    for (const waiter of waiting) {
      waiter.reject(err);
    }
  }

  /** Send one frame and await its reply (replies arrive in send order). */
  call(frame: Request): Promise<Reply> {
    if (this.closed) {
      return Promise.reject(new Error("client is closed"));
    }
    return new Promise((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.socket.write(JSON.stringify(frame) + "\n");
    });
  }

  private async expect<T extends Reply>(frame: Request, kind: T["type"]): Promise<T> {
    const reply = await this.call(frame);
    if (isError(reply)) {
      throw new BridgeProtocolError(reply);
    }
    if (reply.type !== kind) {
      throw new Error(`expected ${kind} reply, got ${reply.type}`);
    }
    return reply as T;
  }

  hello(options: HelloOptions): Promise<HelloReply> {
    return this.expect<HelloReply>(
      {
        proto: PROTO_VERSION,
        type: "hello",
        agents: options.agents,
        obs_labels: options.obsLabels,
        act_labels: options.actLabels,
        seed: options.seed ?? 0,
      },
      "hello",
    );
  }

  reset(episode: number): Promise<ResetReply> {
    return this.expect<ResetReply>({ type: "reset", episode }, "reset");
  }

  mask(agent: string, obs: string): Promise<MaskReply> {
    return this.expect<MaskReply>({ type: "mask", agent, obs }, "mask");
  }

  step(agent: string, obs: string, proposedAction: string, rawReward: number): Promise<StepReply> {
    return this.expect<StepReply>(
      { type: "step", agent, obs, proposed_action: proposedAction, raw_reward: rawReward },
      "step",
    );
  }

  /**
   * One turn with mask applied before the learner's proposal commits: the
   * proposal goes out as a step frame; on rejection the `fallback` chooser
   * picks again from the enforced mask and the step is retried (the
   * engine keeps the turn's hardness draw).
   */
  async proposeStep(
    agent: string,
    obs: string,
    proposedAction: string,
    rawReward: number,
    fallback: (mask: string[]) => string,
  ): Promise<StepReply> {
    const reply = await this.call({
      type: "step",
      agent,
      obs,
      proposed_action: proposedAction,
      raw_reward: rawReward,
    });
    if (isError(reply)) {
      if (reply.error === "mask_violation" && Array.isArray(reply.mask)) {
        const action = fallback(reply.mask);
        if (!maskAllows(reply.mask, action)) {
          throw new Error(`fallback chose ${action} outside the mask`);
        }
        return this.expect<StepReply>(
          { type: "step", agent, obs, proposed_action: action, raw_reward: rawReward },
          "step",
        );
      }
      throw new BridgeProtocolError(reply);
    }
    if (reply.type !== "step") {
      throw new Error(`expected step reply, got ${reply.type}`);
    }
    return reply;
  }

  close(): void {
    this.closed = true;
    this.socket.end();
    this.socket.destroy();
  }
}
