import type { TranscriptRecord } from "../src/types.js";

let seqCounter = 0;

export function resetSeq(): void {
  seqCounter = 0;
}

export function rec(kind: TranscriptRecord["kind"],
                    fields: Partial<TranscriptRecord> = {}): TranscriptRecord {
  return {
    cid: "c-test",
    seq: seqCounter++,
    kind,
    role: null,
    utterance: null,
    meta: {},
    ...fields,
  };
}

export function turn(role: "seller" | "shopper", utterance: string,
                     meta: Record<string, unknown> = {}): TranscriptRecord {
  return rec("turn", { role, utterance, meta });
}

/** A short session: greeting, grounded seller reply, reveal, recommendation. */
export function demoRecords(): TranscriptRecord[] {
  resetSeq();
  return [
    turn("shopper", "Hi, I need a coffee maker."),
    turn("seller", "How many cups of coffee do you drink per day?",
         { grounded_paragraphs: [2] }),
    rec("revelation", {
      meta: { turn_index: 2, qid: "q1",
              question: "How many cups of coffee do you drink per day?",
              option: "2-4" },
    }),
    turn("shopper", "Usually a couple of cups."),
    turn("seller", "Then the BrewMate is a great fit.",
         { grounded_paragraphs: [] }),
    rec("recommendation", { meta: { turn_index: 3, product_ids: ["cm-01"] } }),
  ];
}

export const PENDING_PRODUCT = {
  id: "cm-01",
  name: "BrewMate 12-Cup Programmable Drip Coffee Maker",
  price: "49.99",
  description: "A dependable 12-cup drip machine.",
  features: ["12-cup glass carafe", "programmable timer"],
};
