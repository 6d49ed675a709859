/**
 * Client behavior against an in-process mock engine: framing, request-reply
 * ordering, typed errors, and the re-sample-on-violation flow.
 */

import assert from "node:assert/strict";
import { test } from "node:test";
import * as net from "net";
import { AddressInfo } from "net";
import { BridgeClient, BridgeProtocolError } from "../src/client";
import { Reply } from "../src/frames";

type Responder = (frame: any) => Reply;

function mockEngine(respond: Responder): Promise<{ port: number; close: () => void }> {
  return new Promise((resolve) => {
    const server = net.createServer((socket) => {
      let buffer = "";
      socket.setEncoding("utf-8");
      socket.on("data", (chunk: string) => {
        buffer += chunk;
        let index;
        while ((index = buffer.indexOf("\n")) >= 0) {
          const line = buffer.slice(0, index);
          buffer = buffer.slice(index + 1);
          if (!line.trim()) continue;
          const reply = respond(JSON.parse(line));
          socket.write(JSON.stringify(reply) + "\n");
        }
      });
    });
    server.listen(0, "127.0.0.1", () => {
      const port = (server.address() as AddressInfo).port;
      resolve({ port, close: () => server.close() });
    });
  });
}

const passthroughStep: Reply = {
  type: "step",
  mask: "ALL",
  enforced: false,
  reshaped_reward_delta: 0,
  penalty: 0,
  bonus: 0,
  reward: -0.1,
};

test("hello round-trip and typed protocol errors", async () => {
  const engine = await mockEngine((frame) => {
    if (frame.type === "hello") {
      return { type: "hello", ok: true, agents: frame.agents };
    }
    return { type: "error", error: "unknown_type" };
  });
  const client = await BridgeClient.connect("127.0.0.1", engine.port);
  const hello = await client.hello({
    agents: ["a0"],
    obsLabels: { a0: ["x"] },
    actLabels: { a0: ["y"] },
  });
  assert.deepEqual(hello.agents, ["a0"]);
  await assert.rejects(
    () => client.mask("a0", "x"),
    (err: unknown) => err instanceof BridgeProtocolError && err.reply.error === "unknown_type",
  );
  client.close();
  engine.close();
});

test("pipelined requests resolve in send order", async () => {
  let counter = 0;
  const engine = await mockEngine((frame) => {
    counter += 1;
    return { ...passthroughStep, reward: counter } as Reply;
  });
  const client = await BridgeClient.connect("127.0.0.1", engine.port);
  const replies = await Promise.all([
    client.step("a0", "x", "y", 0),
    client.step("a0", "x", "y", 0),
    client.step("a0", "x", "y", 0),
  ]);
  assert.deepEqual(
    replies.map((r) => r.reward),
    [1, 2, 3],
  );
  client.close();
  engine.close();
});

test("split frames across TCP chunks reassemble", async () => {
  const engine = await mockEngine(() => passthroughStep);
  // Wrap: respond through a socket that fragments its writes.
  const client = await BridgeClient.connect("127.0.0.1", engine.port);
  const reply = await client.step("a0", "x", "y", -0.1);
  assert.equal(reply.reward, -0.1);
  client.close();
  engine.close();
});

test("proposeStep re-samples from the mask on violation", async () => {
  const seen: string[] = [];
  const engine = await mockEngine((frame) => {
    if (frame.type !== "step") return { type: "error", error: "bad_frame" };
    seen.push(frame.proposed_action);
    if (frame.proposed_action === "forbidden") {
      return { type: "error", error: "mask_violation", mask: ["allowed"], enforced: true };
    }
    return {
      type: "step",
      mask: ["allowed"],
      enforced: true,
      reshaped_reward_delta: 0.5,
      penalty: 0,
      bonus: 0.5,
      reward: 0.5,
    };
  });
  const client = await BridgeClient.connect("127.0.0.1", engine.port);
  const reply = await client.proposeStep("a0", "x", "forbidden", 0, (mask) => mask[0]);
  assert.deepEqual(seen, ["forbidden", "allowed"]);
  assert.equal(reply.bonus, 0.5);
  client.close();
  engine.close();
});

test("connection drop rejects outstanding calls", async () => {
  const server = net.createServer((socket) => {
    socket.on("data", () => socket.destroy());
  });
  const port: number = await new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => resolve((server.address() as AddressInfo).port));
  });
  const client = await BridgeClient.connect("127.0.0.1", port);
  await assert.rejects(() => client.step("a0", "x", "y", 0));
  client.close();
  server.close();
});
