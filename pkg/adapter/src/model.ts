/**
 * Tiny deterministic causal byte LM.
 *
 * Next-byte probability is a Witten-Bell interpolation of the empirical
 * context distributions accumulated over the bytes consumed so far, backed
 * off to a uniform prior over the 256 byte values:
 *
 *   p_0(s)        = 1 / 256
 *   p_o(s | ctx)  = g_o * count_o(ctx, s) / n_o + (1 - g_o) * p_{o-1}(s)
 *   g_o           = n_o / (n_o + 1)
 *
 * where n_o is how often the length-o context preceding the current
 * position has occurred before. Probabilities depend only on the preceding
 * bytes, so the model is causal; every probability is strictly below 1, so
 * log-probabilities are strictly negative. No randomness anywhere: scoring
 * the same input twice produces identical output.
 */

const ALPHABET = 256;

export const MODEL_ID_PREFIX = "ctxmix";

export class ContextMixByteLm {
  readonly order: number;
  private readonly counts: Array<Map<number, Map<number, number>>>;
  private readonly totals: Array<Map<number, number>>;
  private readonly history: number[] = [];

  constructor(order = 3) {
    if (order < 1 || order > 3) {
      throw new Error(`context order must be in 1..3, got ${order}`);
    }
    this.order = order;
    this.counts = Array.from({ length: order }, () => new Map());
    this.totals = Array.from({ length: order }, () => new Map());
  }

  get modelId(): string {
    return `${MODEL_ID_PREFIX}-o${this.order}`;
  }

  private contextKey(o: number): number | null {
    if (this.history.length < o) return null;
    let key = 0;
    for (let i = this.history.length - o; i < this.history.length; i++) {
      key = key * ALPHABET + this.history[i];
    }
    return key;
  }

  /** Probability of `sym` given everything consumed so far. */
  prob(sym: number): number {
    let p = 1 / ALPHABET;
    for (let o = 1; o <= this.order; o++) {
      const key = this.contextKey(o);
      if (key === null) break;
      const total = this.totals[o - 1].get(key) ?? 0;
      if (total === 0) continue;
      const count = this.counts[o - 1].get(key)?.get(sym) ?? 0;
      const g = total / (total + 1);
      p = g * (count / total) + (1 - g) * p;
    }
    return p;
  }

  /** Advance the context window, updating every context order's counts. */
  consume(sym: number): void {
    for (let o = 1; o <= this.order; o++) {
      const key = this.contextKey(o);
      if (key === null) continue;
      let bySym = this.counts[o - 1].get(key);
      if (bySym === undefined) {
        bySym = new Map();
        this.counts[o - 1].set(key, bySym);
      }
      bySym.set(sym, (bySym.get(sym) ?? 0) + 1);
      this.totals[o - 1].set(key, (this.totals[o - 1].get(key) ?? 0) + 1);
    }
    this.history.push(sym);
    if (this.history.length > this.order) this.history.shift();
  }

  logprob(sym: number): number {
    return Math.log(this.prob(sym));
  }
}

/**
 * Per-token log-probabilities of the masked (response) bytes of one
 * rendered input, conditioning each byte on everything before it. A fresh
 * model is used per call: the conditioning context is exactly the sample's
 * own rendered prefix.
 */
export function responseLogprobs(
  bytes: Uint8Array,
  scored: boolean[],
  order = 3,
): number[] {
  if (bytes.length !== scored.length) {
    throw new Error("bytes and mask length mismatch");
  }
  const model = new ContextMixByteLm(order);
  const out: number[] = [];
  for (let i = 0; i < bytes.length; i++) {
    if (scored[i]) out.push(model.logprob(bytes[i]));
    model.consume(bytes[i]);
  }
  return out;
}
