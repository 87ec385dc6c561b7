/**
 * Prompt templates: render a conversation into model-input bytes plus a
 * per-byte mask marking which bytes are response tokens. Human turns render
 * as instruction blocks and gpt turns as assistant blocks; only the bytes
 * of assistant turn *values* are scored, never the block markers.
 */

import type { PoolSample } from "./pool.js";

export type RenderedInput = { bytes: Uint8Array; scored: boolean[] };

export type TemplateName = "instruct" | "plain";

const ENCODER = new TextEncoder();

const TEMPLATES: Record<TemplateName, { human: [string, string]; gpt: [string, string] }> = {
  instruct: {
    human: ["### Instruction:\n", "\n"],
    gpt: ["### Response:\n", "\n"],
  },
  plain: {
    human: ["", "\n"],
    gpt: ["", "\n"],
  },
};

export function renderSample(sample: PoolSample, template: TemplateName): RenderedInput {
  const spec = TEMPLATES[template];
  if (spec === undefined) {
    throw new Error(`unknown prompt template: ${template}`);
  }
  const chunks: Array<{ text: string; scored: boolean }> = [];
  for (const turn of sample.conversations) {
    const [prefix, suffix] = spec[turn.from];
    if (prefix) chunks.push({ text: prefix, scored: false });
    chunks.push({ text: turn.value, scored: turn.from === "gpt" });
    if (suffix) chunks.push({ text: suffix, scored: false });
  }
  const parts = chunks.map((c) => ENCODER.encode(c.text));
  const total = parts.reduce((n, p) => n + p.length, 0);
  const bytes = new Uint8Array(total);
  const scored = new Array<boolean>(total);
  let offset = 0;
  chunks.forEach((chunk, i) => {
    bytes.set(parts[i], offset);
    scored.fill(chunk.scored, offset, offset + parts[i].length);
    offset += parts[i].length;
  });
  return { bytes, scored };
}
