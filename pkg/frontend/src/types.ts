/** Wire types for the /v1 HTTP API. */

export type Role = "seller" | "shopper" | "observer";

export type SessionStatus = "active" | "accepted" | "exhausted" | "aborted";

export interface TranscriptRecord {
  cid: string;
  seq: number;
  kind: "session" | "turn" | "revelation" | "recommendation" | "decision" | "status";
  role: "seller" | "shopper" | null;
  utterance: string | null;
  meta: Record<string, unknown>;
}

export interface ProductCard {
  id: string;
  name: string;
  price: string;
  description: string;
  features: string[];
}

export interface RevealedPreference {
  qid: string;
  question: string;
  option: string;
}

export interface PendingRecommendation {
  turn_index: number;
  products: ProductCard[];
}

export interface SessionView {
  cid: string;
  category: string;
  status: SessionStatus;
  role: Role;
  seller_kind: "human" | "bot";
  shopper_kind: "human" | "bot";
  next_role: "seller" | "shopper" | null;
  records: TranscriptRecord[];
  pending_recommendation: PendingRecommendation | null;
  revealed_preferences?: RevealedPreference[];
  guide?: string;
  catalog?: string;
  catalog_search?: string;
}

export interface GuideParagraph {
  index: number;
  text: string;
}

export interface GuidePayload {
  category: string;
  title: string;
  paragraphs: GuideParagraph[];
}

export interface SearchResult extends ProductCard {
  score: number;
}

export interface MessagePayload {
  role: string; // signed token
  utterance: string;
  grounded_paragraphs?: number[];
  recommended_products?: string[];
}

export interface DecisionPayload {
  role: string; // signed token
  decision: "accept" | "reject";
  product_id: string;
}

export interface AnnotationRecord {
  cid: string;
  metric: string;
  value: number;
  annotator: string;
  [extra: string]: unknown;
}
