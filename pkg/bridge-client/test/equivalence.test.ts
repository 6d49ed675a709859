/**
 * Equivalence against a live engine: the recorded transcript (produced by
 * the in-process reshaping path, which the engine's own test suite proves
 * identical to in-process wrapping) must replay with byte-identical
 * replies — masks, enforcement flags, and reward deltas included.
 */

import assert from "node:assert/strict";
import { after, before, test } from "node:test";
import { spawn, ChildProcess } from "node:child_process";
import * as path from "path";
import * as readline from "readline";
import { BridgeClient } from "../src/client";
import { isError } from "../src/frames";
import { loadTranscript, replayTranscript } from "../src/transcript";

// Compiled test lives at bridge-client/dist/test/; the engine repository
// root is three levels up and the fixtures two.
const ENGINE_ROOT = path.resolve(__dirname, "..", "..", "..");
const ORG_DOC = path.join(ENGINE_ROOT, "configs", "predator_prey_org_small.json");
const TRANSCRIPT = path.resolve(__dirname, "..", "..", "fixtures", "transcript.jsonl");

let engine: ChildProcess | null = null;
let port = 0;

before(async () => {
  engine = spawn(
    "python3",
    ["-m", "orgmarl.cli", "serve", "--org", ORG_DOC, "--port", "0"],
    {
      cwd: ENGINE_ROOT,
      env: { ...process.env, PYTHONPATH: path.join(ENGINE_ROOT, "src") },
      stdio: ["ignore", "pipe", "inherit"],
    },
  );
  port = await new Promise<number>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("engine did not start in 20s")), 20000);
    const lines = readline.createInterface({ input: engine!.stdout! });
    lines.on("line", (line) => {
      const match = /listening on [\d.]+:(\d+)/.exec(line);
      if (match) {
        clearTimeout(timer);
        resolve(Number(match[1]));
      }
    });
    engine!.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`engine exited early with code ${code}`));
    });
  });
});

after(() => {
  engine?.kill();
});

test("recorded transcript replays with identical replies", async () => {
  const exchanges = loadTranscript(TRANSCRIPT);
  assert.ok(exchanges.length >= 22, "transcript should hold at least a 10-step episode");
  const client = await BridgeClient.connect("127.0.0.1", port);
  const mismatches = await replayTranscript(client, exchanges);
  assert.deepEqual(mismatches, [], JSON.stringify(mismatches, null, 2));
  client.close();
});

test("fresh scripted episode: masks honored, decomposition consistent", async () => {
  const exchanges = loadTranscript(TRANSCRIPT);
  const helloFrame = exchanges[0].send as any;
  const client = await BridgeClient.connect("127.0.0.1", port);
  const hello = await client.hello({
    agents: helloFrame.agents,
    obsLabels: helloFrame.obs_labels,
    actLabels: helloFrame.act_labels,
    seed: 7,
  });
  assert.deepEqual(hello.agents, helloFrame.agents);
  await client.reset(0);
  const agents: string[] = helloFrame.agents;
  const observations: Record<string, string[]> = helloFrame.obs_labels;
  for (let turn = 0; turn < 12; turn++) {
    const agent = agents[turn % agents.length];
    const obs = observations[agent][turn % observations[agent].length];
    const verdict = await client.mask(agent, obs);
    const pool =
      verdict.enforced && verdict.mask !== "ALL"
        ? (verdict.mask as string[])
        : (helloFrame.act_labels[agent] as string[]);
    const action = pool[turn % pool.length];
    const step = await client.step(agent, obs, action, -0.1);
    assert.equal(step.enforced, verdict.enforced);
    assert.deepEqual(step.mask, verdict.mask);
    assert.ok(Math.abs(step.penalty + step.bonus - step.reshaped_reward_delta) < 1e-12);
    assert.ok(Math.abs(step.reward - (-0.1 + step.reshaped_reward_delta)) < 1e-12);
  }
  client.close();
});

test("alphabet mismatch refuses the session", async () => {
  const client = await BridgeClient.connect("127.0.0.1", port);
  const reply = await client.call({
    proto: 1,
    type: "hello",
    agents: ["pred_0", "pred_1"],
    obs_labels: { pred_0: ["only"], pred_1: ["only"] },
    act_labels: { pred_0: ["nothing"], pred_1: ["nothing"] },
    seed: 0,
  });
  assert.ok(isError(reply) && reply.error === "alphabet_mismatch");
  client.close();
});
