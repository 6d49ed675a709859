/**
 * Transcript replay: a JSONL file of {send, expect} exchanges fully
 * describes a session, so recorded sessions replay offline against a mock
 * or online against a live engine.
 */

import * as fs from "fs";
import { Reply, Request } from "./frames";
import { BridgeClient } from "./client";

export interface Exchange {
  send: Request;
  expect: Reply;
}

export function loadTranscript(path: string): Exchange[] {
  return fs
    .readFileSync(path, "utf-8")
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .map((line) => JSON.parse(line) as Exchange);
}

export interface Mismatch {
  index: number;
  send: Request;
  expected: Reply;
  got: Reply;
}

/** Replay every request in order; returns the exchanges whose replies
 * differ from the recorded ones (empty array = exact match). */
export async function replayTranscript(
  client: BridgeClient,
  exchanges: Exchange[],
): Promise<Mismatch[]> {
  const mismatches: Mismatch[] = [];
  for (let index = 0; index < exchanges.length; index++) {
    const { send, expect } = exchanges[index];
    const got = await client.call(send);
    if (JSON.stringify(sorted(got)) !== JSON.stringify(sorted(expect))) {
      mismatches.push({ index, send, expected: expect, got });
    }
  }
  return mismatches;
}

function sorted(value: unknown): unknown {
  if (Array.isArray(value)) {
    return value.map(sorted);
  }
  if (value && typeof value === "object") {
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(value as object).sort()) {
      out[key] = sorted((value as Record<string, unknown>)[key]);
    }
    return out;
  }
  return value;
}
