/** Pool JSONL reading for the conversation record format. */

import fs from "node:fs";

export type Turn = { from: "human" | "gpt"; value: string };

export type PoolSample = {
  id: string;
  image?: string;
  conversations: Turn[];
  source?: string;
};

export function parsePoolLine(line: string, lineno: number): PoolSample {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch (err) {
    throw new Error(`pool line ${lineno}: not valid JSON (${err})`);
  }
  const record = raw as Record<string, unknown>;
  if (typeof record.id !== "string" || record.id.length === 0) {
    throw new Error(`pool line ${lineno}: missing string id`);
  }
  if (!Array.isArray(record.conversations) || record.conversations.length === 0) {
    throw new Error(`pool line ${lineno}: sample ${record.id}: conversations missing or empty`);
  }
  const conversations: Turn[] = record.conversations.map((t, i) => {
    const turn = t as Record<string, unknown>;
    if ((turn.from !== "human" && turn.from !== "gpt") || typeof turn.value !== "string") {
      throw new Error(`pool line ${lineno}: sample ${record.id}: malformed turn ${i}`);
    }
    return { from: turn.from, value: turn.value };
  });
  return {
    id: record.id,
    conversations,
    image: typeof record.image === "string" ? record.image : undefined,
    source: typeof record.source === "string" ? record.source : undefined,
  };
}

/** Read the whole pool, rejecting duplicate ids. */
export function readPool(path: string): PoolSample[] {
  if (!fs.existsSync(path)) {
    throw new Error(`pool file not found: ${path}`);
  }
  const text = fs.readFileSync(path, "utf-8");
  const samples: PoolSample[] = [];
  const seen = new Set<string>();
  let lineno = 0;
  for (const line of text.split("\n")) {
    lineno += 1;
    if (line.trim() === "") continue;
    const sample = parsePoolLine(line, lineno);
    if (seen.has(sample.id)) {
      throw new Error(`pool line ${lineno}: duplicate id ${sample.id}`);
    }
    seen.add(sample.id);
    samples.push(sample);
  }
  return samples;
}
