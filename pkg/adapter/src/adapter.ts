/**
 * Score a pool with the built-in causal byte LM and emit score-file JSONL:
 * a header row declaring orientation, scorer id, and length normalization,
 * then one `{id, score, num_tokens}` row per pool record, in pool order.
 * Every pool id appears exactly once; a sample that cannot be scored is a
 * hard failure, never a silent omission.
 */

import fs from "node:fs";

import { responseLogprobs } from "./model.js";
import { readPool, type PoolSample } from "./pool.js";
import { renderSample, type TemplateName } from "./template.js";

export type Orientation = "nll" | "loglik";

export type AdapterConfig = {
  modelOrder: number;
  batchSize: number;
  device: string;
  orientation: Orientation;
  lengthNorm: boolean;
  template: TemplateName;
};

export const DEFAULT_CONFIG: AdapterConfig = {
  modelOrder: 3,
  batchSize: 64,
  device: "cpu",
  orientation: "nll",
  lengthNorm: false,
  template: "instruct",
};

export type ScoreRow = { id: string; score: number; num_tokens: number };

export function reduceScore(
  logprobs: number[],
  orientation: Orientation,
  lengthNorm: boolean,
): number {
  if (logprobs.length === 0) {
    throw new Error("no response tokens to score");
  }
  let total = 0;
  for (const lp of logprobs) {
    if (!Number.isFinite(lp) || lp > 0) {
      throw new Error(`bad token log-prob: ${lp}`);
    }
    total += lp;
  }
  let score = orientation === "nll" ? -total : total;
  if (lengthNorm) score /= logprobs.length;
  return score;
}

export function scoreSample(sample: PoolSample, config: AdapterConfig): ScoreRow {
  const rendered = renderSample(sample, config.template);
  const logprobs = responseLogprobs(rendered.bytes, rendered.scored, config.modelOrder);
  if (logprobs.length === 0) {
    throw new Error(`sample ${sample.id}: no gpt turn to score`);
  }
  return {
    id: sample.id,
    score: reduceScore(logprobs, config.orientation, config.lengthNorm),
    num_tokens: logprobs.length,
  };
}

export type ScoreRunStats = {
  scored: number;
  imagesDropped: number;
  modelId: string;
};

/**
 * Score every pool record and write the score file. Samples are processed
 * in batches of `batchSize`; rows land in pool order regardless of batch
 * boundaries.
 */
export function scorePoolToFile(
  poolPath: string,
  outPath: string,
  config: AdapterConfig = DEFAULT_CONFIG,
  log: (message: string) => void = (m) => process.stderr.write(m + "\n"),
): ScoreRunStats {
  const samples = readPool(poolPath);
  const modelId = `ctxmix-o${config.modelOrder}`;
  if (config.device !== "cpu") {
    log(`warning: device hint ${config.device} is not available; running on cpu`);
  }

  let imagesDropped = 0;
  const rows: ScoreRow[] = new Array(samples.length);
  for (let start = 0; start < samples.length; start += config.batchSize) {
    const batch = samples.slice(start, start + config.batchSize);
    batch.forEach((sample, offset) => {
      if (sample.image !== undefined) {
        // Text-only model: the visual input conditions nothing.
        if (imagesDropped === 0) {
          log(`warning: ${modelId} is text-only; image inputs are dropped`);
        }
        imagesDropped += 1;
      }
      rows[start + offset] = scoreSample(sample, config);
    });
  }

  const header = {
    orientation: config.orientation,
    scorer: modelId,
    length_norm: config.lengthNorm,
  };
  const lines = [JSON.stringify(header)];
  for (const row of rows) {
    lines.push(JSON.stringify(row));
  }
  fs.writeFileSync(outPath, lines.join("\n") + "\n", "utf-8");
  return { scored: rows.length, imagesDropped, modelId };
}
