import { describe, expect, it } from "vitest";

import {
  buildDecisionPayload,
  buildMessagePayload,
  composeUnlocked,
  emptyDraft,
  initialState,
  nextSpeaker,
  reduce,
  stateFromRecords,
  toggleParagraph,
  toggleProduct,
} from "../src/state.js";
import { demoRecords, rec, resetSeq, turn } from "./helpers.js";

describe("reducer", () => {
  it("builds the feed from turns and events", () => {
    const state = stateFromRecords("c-test", "shopper", demoRecords());
    expect(state.feed.map((i) => i.kind)).toEqual([
      "message", "message", "coordinator", "message", "message",
      "recommendation",
    ]);
    expect(state.turnCount).toBe(4);
    expect(state.revealed).toEqual([
      { qid: "q1", question: "How many cups of coffee do you drink per day?",
        option: "2-4" },
    ]);
    expect(state.pending).toEqual({ turnIndex: 3, productIds: ["cm-01"] });
    expect(state.status).toBe("active");
  });

  it("accept decision resolves pending and terminates", () => {
    const records = demoRecords();
    records.push(rec("decision", {
      meta: { turn_index: 4, decision: "accept", product_id: "cm-01",
              rec_turn_index: 3, auto: false },
    }));
    const state = stateFromRecords("c-test", "shopper", records);
    expect(state.pending).toBeNull();
    expect(state.status).toBe("accepted");
  });

  it("reject decision keeps the conversation active", () => {
    const records = demoRecords();
    records.push(rec("decision", {
      meta: { turn_index: 4, decision: "reject", product_id: "cm-01",
              rec_turn_index: 3, auto: false },
    }));
    const state = stateFromRecords("c-test", "shopper", records);
    expect(state.pending).toBeNull();
    expect(state.status).toBe("active");
  });

  it("status records terminate the conversation", () => {
    const records = [...demoRecords(),
                     rec("status", { meta: { status: "exhausted",
                                             reason: "limit" } })];
    const state = stateFromRecords("c-test", "shopper", records);
    expect(state.status).toBe("exhausted");
  });

  it("drops duplicate seq numbers after a reconnect", () => {
    const records = demoRecords();
    const once = stateFromRecords("c-test", "shopper", records);
    const twice = records.reduce(reduce, once);
    expect(twice).toEqual(once);
  });

  it("stream replay equals incremental reduction", () => {
    const records = demoRecords();
    let incremental = initialState("c-test", "shopper");
    for (const record of records) {
      incremental = reduce(incremental, record);
    }
    expect(stateFromRecords("c-test", "shopper", records)).toEqual(incremental);
  });

  it("tracks whose turn it is from the turn count", () => {
    resetSeq();
    let state = initialState("c-test", "shopper");
    expect(nextSpeaker(state)).toBe("shopper");
    expect(composeUnlocked(state)).toBe(true);
    state = reduce(state, turn("shopper", "Hi."));
    expect(nextSpeaker(state)).toBe("seller");
    expect(composeUnlocked(state)).toBe(false);
  });
});

describe("seller drafts", () => {
  it("message payload carries the selected paragraph indices", () => {
    let draft = emptyDraft();
    draft = { ...draft, text: "Drip machines brew a full carafe." };
    draft = toggleParagraph(draft, 7);
    draft = toggleParagraph(draft, 4);
    const payload = buildMessagePayload("seller.tok", draft);
    expect(payload.grounded_paragraphs).toEqual([4, 7]);
    expect(payload.utterance).toBe("Drip machines brew a full carafe.");
    expect(payload.recommended_products).toBeUndefined();
  });

  it("empty selection still submits an explicit empty list", () => {
    const payload = buildMessagePayload("seller.tok",
                                        { ...emptyDraft(), text: "Hello" });
    expect(payload.grounded_paragraphs).toEqual([]);
  });

  it("toggling a paragraph twice clears it", () => {
    let draft = toggleParagraph(emptyDraft(), 3);
    draft = toggleParagraph(draft, 3);
    expect(draft.selectedParagraphs).toEqual([]);
  });

  it("sending clears the selection via emptyDraft", () => {
    let draft = toggleParagraph({ ...emptyDraft(), text: "x" }, 1);
    buildMessagePayload("seller.tok", draft);
    draft = emptyDraft();
    expect(buildMessagePayload("seller.tok", draft).grounded_paragraphs)
      .toEqual([]);
  });

  it("attaching products adds a recommendation to the payload", () => {
    let draft = { ...emptyDraft(), text: "Try the BrewMate." };
    draft = toggleProduct(draft, "cm-01", ["cm-01", "cm-02"]);
    const payload = buildMessagePayload("seller.tok", draft);
    expect(payload.recommended_products).toEqual(["cm-01"]);
  });

  it("blocks recommending a product that is not in the catalog", () => {
    const draft = toggleProduct(emptyDraft(), "ghost-9", ["cm-01", "cm-02"]);
    expect(draft.selectedProducts).toEqual([]);
  });

  it("decision payload shape", () => {
    expect(buildDecisionPayload("shopper.tok", "accept", "cm-01")).toEqual({
      role: "shopper.tok", decision: "accept", product_id: "cm-01",
    });
  });
});
