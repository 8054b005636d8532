/**
 * Pure chat state: a reduction of streamed transcript records plus local
 * drafts. The same reducer serves live streaming and replay, so the view
 * after replaying a stored stream equals the view after live interaction.
 */

import type {
  PendingRecommendation,
  ProductCard,
  RevealedPreference,
  Role,
  SessionStatus,
  TranscriptRecord,
} from "./types.js";

export type FeedItem =
  | { kind: "message"; seq: number; role: "seller" | "shopper"; text: string;
      grounded: number[] | null }
  | { kind: "coordinator"; seq: number; qid: string; question: string;
      option: string }
  | { kind: "recommendation"; seq: number; turnIndex: number;
      productIds: string[] }
  | { kind: "decision"; seq: number; decision: "accept" | "reject";
      productId: string; auto: boolean }
  | { kind: "status"; seq: number; status: SessionStatus; reason: string };

export interface ChatState {
  cid: string;
  role: Role;
  status: SessionStatus;
  feed: FeedItem[];
  revealed: RevealedPreference[];
  pending: { turnIndex: number; productIds: string[] } | null;
  pendingProducts: ProductCard[];
  turnCount: number;
  lastSeq: number;
}

export function initialState(cid: string, role: Role): ChatState {
  return {
    cid, role, status: "active", feed: [], revealed: [], pending: null,
    pendingProducts: [], turnCount: 0, lastSeq: -1,
  };
}

export function reduce(state: ChatState, record: TranscriptRecord): ChatState {
  if (record.seq <= state.lastSeq) {
    return state; // replayed duplicate from a stream reconnect
  }
  const next: ChatState = { ...state, feed: [...state.feed],
                            revealed: [...state.revealed],
                            lastSeq: record.seq };
  const meta = record.meta ?? {};
  switch (record.kind) {
    case "turn": {
      const grounded = (meta["grounded_paragraphs"] as number[] | undefined);
      next.feed.push({
        kind: "message", seq: record.seq,
        role: record.role as "seller" | "shopper",
        text: record.utterance ?? "",
        grounded: grounded ?? null,
      });
      next.turnCount = state.turnCount + 1;
      break;
    }
    case "revelation": {
      const item = {
        kind: "coordinator" as const, seq: record.seq,
        qid: String(meta["qid"]), question: String(meta["question"]),
        option: String(meta["option"]),
      };
      next.feed.push(item);
      next.revealed.push({ qid: item.qid, question: item.question,
                           option: item.option });
      break;
    }
    case "recommendation": {
      const productIds = (meta["product_ids"] as string[]) ?? [];
      const turnIndex = Number(meta["turn_index"]);
      next.feed.push({ kind: "recommendation", seq: record.seq, turnIndex,
                       productIds });
      next.pending = { turnIndex, productIds };
      break;
    }
    case "decision": {
      const decision = meta["decision"] === "accept" ? "accept" : "reject";
      next.feed.push({
        kind: "decision", seq: record.seq, decision,
        productId: String(meta["product_id"]),
        auto: Boolean(meta["auto"]),
      });
      next.pending = null;
      next.pendingProducts = [];
      if (decision === "accept") {
        next.status = "accepted";
      }
      break;
    }
    case "status": {
      const status = meta["status"] as SessionStatus;
      next.feed.push({ kind: "status", seq: record.seq, status,
                       reason: String(meta["reason"] ?? "") });
      next.status = status;
      break;
    }
    case "session":
      break; // observer-only genesis record; nothing to show
  }
  return next;
}

export function stateFromRecords(cid: string, role: Role,
                                 records: TranscriptRecord[]): ChatState {
  return records.reduce(reduce, initialState(cid, role));
}

/** Attach full product cards once the session view resolves pending ids. */
export function withPendingProducts(
    state: ChatState, pending: PendingRecommendation | null): ChatState {
  return { ...state, pendingProducts: pending ? pending.products : [] };
}

export function nextSpeaker(state: ChatState): "seller" | "shopper" {
  // Conversations always open with the shopper and strictly alternate.
  return state.turnCount % 2 === 0 ? "shopper" : "seller";
}

export function composeUnlocked(state: ChatState): boolean {
  return state.status === "active" && nextSpeaker(state) === state.role;
}

// ---------------------------------------------------------------------------
// Seller drafts: message text, grounding selection, recommendation selection.
// ---------------------------------------------------------------------------

export interface SellerDraft {
  text: string;
  selectedParagraphs: number[];
  selectedProducts: string[];
}

export function emptyDraft(): SellerDraft {
  return { text: "", selectedParagraphs: [], selectedProducts: [] };
}

export function toggleParagraph(draft: SellerDraft, index: number): SellerDraft {
  const selected = draft.selectedParagraphs.includes(index)
    ? draft.selectedParagraphs.filter((i) => i !== index)
    : [...draft.selectedParagraphs, index].sort((a, b) => a - b);
  return { ...draft, selectedParagraphs: selected };
}

export function toggleProduct(draft: SellerDraft, productId: string,
                              catalogIds: string[]): SellerDraft {
  if (!catalogIds.includes(productId)) {
    return draft; // not in the catalog: blocked client-side
  }
  const selected = draft.selectedProducts.includes(productId)
    ? draft.selectedProducts.filter((id) => id !== productId)
    : [...draft.selectedProducts, productId];
  return { ...draft, selectedProducts: selected };
}

/**
 * The outgoing message payload: the draft text plus the currently selected
 * paragraph indices (possibly empty) and any attached product ids. Callers
 * must reset the draft with emptyDraft() after a successful send.
 */
export function buildMessagePayload(token: string, draft: SellerDraft): {
  role: string; utterance: string; grounded_paragraphs: number[];
  recommended_products?: string[];
} {
  const payload: {
    role: string; utterance: string; grounded_paragraphs: number[];
    recommended_products?: string[];
  } = {
    role: token,
    utterance: draft.text.trim(),
    grounded_paragraphs: [...draft.selectedParagraphs],
  };
  if (draft.selectedProducts.length > 0) {
    payload.recommended_products = [...draft.selectedProducts];
  }
  return payload;
}

export function buildDecisionPayload(token: string,
                                     decision: "accept" | "reject",
                                     productId: string) {
  return { role: token, decision, product_id: productId };
}
