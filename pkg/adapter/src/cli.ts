#!/usr/bin/env node
/**
 * necsel-adapter --pool pool.jsonl --out scores.jsonl
 *     [--order 3] [--batch-size 64] [--device cpu]
 *     [--orientation nll|loglik] [--length-norm] [--template instruct|plain]
 */

import { DEFAULT_CONFIG, scorePoolToFile, type AdapterConfig } from "./adapter.js";

function usage(): never {
  process.stderr.write(
    "usage: necsel-adapter --pool FILE --out FILE [--order N] [--batch-size N]\n" +
      "                      [--device NAME] [--orientation nll|loglik]\n" +
      "                      [--length-norm] [--template instruct|plain]\n",
  );
  process.exit(1);
}

function parseArgs(argv: string[]): { pool: string; out: string; config: AdapterConfig } {
  const config: AdapterConfig = { ...DEFAULT_CONFIG };
  let pool: string | undefined;
  let out: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const next = () => {
      i += 1;
      if (i >= argv.length) usage();
      return argv[i];
    };
    switch (flag) {
      case "--pool":
        pool = next();
        break;
      case "--out":
        out = next();
        break;
      case "--order":
        config.modelOrder = Number(next());
        break;
      case "--batch-size":
        config.batchSize = Number(next());
        break;
      case "--device":
        config.device = next();
        break;
      case "--orientation": {
        const value = next();
        if (value !== "nll" && value !== "loglik") usage();
        config.orientation = value;
        break;
      }
      case "--length-norm":
        config.lengthNorm = true;
        break;
      case "--template": {
        const value = next();
        if (value !== "instruct" && value !== "plain") usage();
        config.template = value;
        break;
      }
      case "--help":
      case "-h":
        usage();
        break;
      default:
        process.stderr.write(`unknown flag: ${flag}\n`);
        usage();
    }
  }
  if (!pool || !out) usage();
  if (!Number.isInteger(config.modelOrder) || !Number.isInteger(config.batchSize) || config.batchSize < 1) {
    usage();
  }
  return { pool, out, config };
}

function main(): void {
  const { pool, out, config } = parseArgs(process.argv.slice(2));
  try {
    const stats = scorePoolToFile(pool, out, config);
    process.stderr.write(
      `scored ${stats.scored} samples with ${stats.modelId}` +
        (stats.imagesDropped ? ` (${stats.imagesDropped} image inputs dropped)` : "") +
        "\n",
    );
    process.stdout.write(JSON.stringify({ out, ...stats }) + "\n");
  } catch (err) {
    process.stderr.write(`error: ${err instanceof Error ? err.message : err}\n`);
    process.exit(2);
  }
}

main();
