/**
 * View rendering: pure functions from state to HTML strings. The browser
 * bootstrap swaps the resulting markup into the page and wires events via
 * data-action attributes; tests assert directly on the markup.
 */

import type { ChatState, FeedItem, SellerDraft } from "./state.js";
import { composeUnlocked } from "./state.js";
import type { GuideParagraph, ProductCard, SearchResult } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function feedItemHtml(item: FeedItem, role: string): string {
  switch (item.kind) {
    case "message": {
      const grounding = role === "seller" && item.grounded !== null
        ? `<span class="grounding">grounded: ${
            item.grounded.length ? item.grounded.join(", ") : "none"}</span>`
        : "";
      return `<div class="bubble ${item.role}">` +
        `<span class="who">${item.role === "seller" ? "Salesperson" : "Shopper"}</span>` +
        `<p>${escapeHtml(item.text)}</p>${grounding}</div>`;
    }
    case "coordinator":
      // Shopper-only, one-sided note: a newly unlocked preference.
      return `<div class="bubble coordinator">` +
        `<span class="who">Coordinator</span>` +
        `<p>New preference unlocked &mdash; ${escapeHtml(item.question)} ` +
        `<strong>${escapeHtml(item.option)}</strong></p></div>`;
    case "recommendation":
      return `<div class="bubble system recommendation">` +
        `<p>Recommendation: ${item.productIds.map(escapeHtml).join(", ")}</p></div>`;
    case "decision":
      return `<div class="bubble system decision">` +
        `<p>${item.auto ? "(no reply) " : ""}Recommendation ${
          item.decision === "accept" ? "accepted" : "rejected"}: ${
          escapeHtml(item.productId)}</p></div>`;
    case "status":
      return `<div class="bubble system status">` +
        `<p>Conversation ${escapeHtml(item.status)}</p></div>`;
  }
}

function productCardHtml(product: ProductCard, actions: string): string {
  return `<div class="card product" data-id="${escapeHtml(product.id)}">` +
    `<h4>${escapeHtml(product.name)}</h4>` +
    `<span class="price">$${escapeHtml(product.price)}</span>` +
    `<p>${escapeHtml(product.description)}</p>` +
    `<ul>${product.features.map((f) => `<li>${escapeHtml(f)}</li>`).join("")}</ul>` +
    actions + `</div>`;
}

// ---------------------------------------------------------------------------
// Shopper view
// ---------------------------------------------------------------------------

export function renderShopperView(state: ChatState): string {
  const feed = state.feed.map((item) => feedItemHtml(item, "shopper")).join("");
  const revealed = state.revealed.map(
    (r) => `<li>${escapeHtml(r.question)} <strong>${escapeHtml(r.option)}</strong></li>`,
  ).join("");
  // accept / reject buttons exist iff a recommendation is pending
  const pendingCard = state.pending
    ? `<div class="pending-recommendation">` +
      state.pendingProducts.map((p) => productCardHtml(
        p,
        `<button data-action="accept" data-id="${escapeHtml(p.id)}">Accept</button>` +
        `<button data-action="reject" data-id="${escapeHtml(p.id)}">Reject</button>`,
      )).join("") +
      `</div>`
    : "";
  const composing = composeUnlocked(state);
  const compose = state.status === "active"
    ? `<form class="compose" data-action="send">` +
      `<textarea name="utterance" ${composing ? "" : "disabled "}placeholder="${
        composing ? "Type your reply" : "Waiting for the salesperson"}"></textarea>` +
      `<button type="submit" ${composing ? "" : "disabled "}>Send</button></form>`
    : `<div class="terminal">This conversation is ${escapeHtml(state.status)}.</div>`;
  return `<section class="shopper-view">` +
    `<aside class="revealed"><h3>Your preferences so far</h3><ul>${revealed}</ul></aside>` +
    `<main class="chat"><div class="feed">${feed}</div>${pendingCard}${compose}</main>` +
    `</section>`;
}

// ---------------------------------------------------------------------------
// Seller view
// ---------------------------------------------------------------------------

export function renderSellerView(state: ChatState, draft: SellerDraft,
                                 guide: GuideParagraph[],
                                 searchResults: SearchResult[]): string {
  const paragraphs = guide.map((p) => {
    const checked = draft.selectedParagraphs.includes(p.index) ? " checked" : "";
    return `<li class="paragraph"><label>` +
      `<input type="checkbox" data-action="toggle-paragraph" ` +
      `data-index="${p.index}"${checked}> ` +
      `<span class="idx">[${p.index}]</span> ${escapeHtml(p.text)}</label></li>`;
  }).join("");
  const results = searchResults.map((p) => {
    const attached = draft.selectedProducts.includes(p.id);
    return productCardHtml(p,
      `<button data-action="toggle-product" data-id="${escapeHtml(p.id)}">` +
      `${attached ? "Detach" : "Attach to message"}</button>`);
  }).join("");
  const attachments = draft.selectedProducts.length
    ? `<div class="attachments">Recommending: ${
        draft.selectedProducts.map(escapeHtml).join(", ")}</div>`
    : "";
  const feed = state.feed
    .filter((item) => item.kind !== "coordinator") // reveals are shopper-side
    .map((item) => feedItemHtml(item, "seller")).join("");
  const composing = composeUnlocked(state);
  const compose = state.status === "active"
    ? `<form class="compose" data-action="send">` +
      `<textarea name="utterance" ${composing ? "" : "disabled "}>${
        escapeHtml(draft.text)}</textarea>${attachments}` +
      `<button type="submit" ${composing ? "" : "disabled "}>Send with ${
        draft.selectedParagraphs.length} grounding paragraph(s)</button></form>`
    : `<div class="terminal">This conversation is ${escapeHtml(state.status)}.</div>`;
  return `<section class="seller-view two-pane">` +
    `<aside class="knowledge">` +
    `<h3>Buying guide</h3><ul class="guide">${paragraphs}</ul>` +
    `<h3>Product search</h3>` +
    `<form data-action="search"><input name="q" type="search" ` +
    `placeholder="Search the catalog"><button type="submit">Search</button></form>` +
    `<div class="results">${results}</div>` +
    `</aside>` +
    `<main class="chat"><div class="feed">${feed}</div>${compose}</main>` +
    `</section>`;
}

// ---------------------------------------------------------------------------
// Post-chat questionnaire (seller side)
// ---------------------------------------------------------------------------

export interface QuestionnaireForm {
  selectedTurns: number[];
  rating: number | null;
  submitted: boolean;
  error: string | null;
}

export function emptyQuestionnaire(): QuestionnaireForm {
  return { selectedTurns: [], rating: null, submitted: false, error: null };
}

export function toggleTurn(form: QuestionnaireForm,
                           seq: number): QuestionnaireForm {
  const selected = form.selectedTurns.includes(seq)
    ? form.selectedTurns.filter((s) => s !== seq)
    : [...form.selectedTurns, seq].sort((a, b) => a - b);
  return { ...form, selectedTurns: selected };
}

/**
 * One CSV-compatible annotation record: the 1-5 partner rating under the
 * fluency metric, with the selected reveal turns carried as an extra field.
 * Returns null (with an error message set by the caller) when invalid or
 * already submitted.
 */
export function buildQuestionnaireRecord(
    state: ChatState, form: QuestionnaireForm, annotator: string) {
  if (form.submitted) {
    return null; // double-submit blocked
  }
  if (form.rating === null || form.rating < 1 || form.rating > 5) {
    return null;
  }
  return {
    cid: state.cid,
    metric: "flu_e",
    value: form.rating,
    annotator,
    revealed_turns: [...form.selectedTurns],
  };
}

export function renderQuestionnaire(state: ChatState,
                                    form: QuestionnaireForm): string {
  const enabled = state.status !== "active" && !form.submitted;
  const shopperTurns = state.feed.filter(
    (item): item is Extract<FeedItem, { kind: "message" }> =>
      item.kind === "message" && item.role === "shopper");
  const rows = shopperTurns.map((turn) => {
    const checked = form.selectedTurns.includes(turn.seq) ? " checked" : "";
    return `<li><label><input type="checkbox" data-action="toggle-turn" ` +
      `data-seq="${turn.seq}"${checked}${enabled ? "" : " disabled"}> ` +
      `${escapeHtml(turn.text)}</label></li>`;
  }).join("");
  const ratings = [1, 2, 3, 4, 5].map((value) =>
    `<label><input type="radio" name="rating" data-action="rate" ` +
    `value="${value}"${form.rating === value ? " checked" : ""}` +
    `${enabled ? "" : " disabled"}> ${value}</label>`).join("");
  const error = form.error
    ? `<p class="validation">${escapeHtml(form.error)}</p>` : "";
  const note = form.submitted
    ? `<p class="done">Questionnaire submitted, thank you.</p>`
    : state.status === "active"
      ? `<p class="hint">Available after the conversation ends.</p>` : "";
  return `<section class="questionnaire"${enabled ? "" : " data-disabled"}>` +
    `<h3>Post-chat questionnaire</h3>` +
    `<p>Select the shopper messages where a preference was revealed:</p>` +
    `<ul>${rows}</ul>` +
    `<p>How would you rate your conversation partner? (1-5)</p>` +
    `<div class="ratings">${ratings}</div>${error}` +
    `<button data-action="submit-questionnaire"${enabled ? "" : " disabled"}>` +
    `Submit</button>${note}</section>`;
}
