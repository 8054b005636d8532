/**
 * Browser bootstrap: joins a session from the URL query string
 * (?cid=&token=&category=), subscribes to the event stream, and re-renders
 * on every record. All state transitions go through the pure reducer; this
 * file only wires DOM events to API calls.
 */

import { ApiClient, subscribeToSession } from "./api.js";
import {
  buildDecisionPayload,
  buildMessagePayload,
  ChatState,
  emptyDraft,
  initialState,
  reduce,
  SellerDraft,
  toggleParagraph,
  toggleProduct,
  withPendingProducts,
} from "./state.js";
import {
  buildQuestionnaireRecord,
  emptyQuestionnaire,
  QuestionnaireForm,
  renderQuestionnaire,
  renderSellerView,
  renderShopperView,
  toggleTurn,
} from "./render.js";
import type { GuideParagraph, Role, SearchResult } from "./types.js";

const api = new ApiClient("/v1");

interface App {
  cid: string;
  token: string;
  role: Role;
  category: string;
  state: ChatState;
  draft: SellerDraft;
  form: QuestionnaireForm;
  guide: GuideParagraph[];
  searchResults: SearchResult[];
  catalogIds: string[];
}

function render(app: App): void {
  const root = document.getElementById("app");
  if (!root) return;
  if (app.role === "shopper") {
    root.innerHTML = renderShopperView(app.state);
  } else {
    root.innerHTML = renderSellerView(app.state, app.draft, app.guide,
                                      app.searchResults) +
      renderQuestionnaire(app.state, app.form);
  }
  const box = root.querySelector("textarea[name=utterance]");
  if (box instanceof HTMLTextAreaElement && app.role === "seller") {
    box.addEventListener("input", () => {
      app.draft = { ...app.draft, text: box.value };
    });
  }
}

async function refresh(app: App): Promise<void> {
  const view = await api.getSession(app.cid, app.token);
  app.state = withPendingProducts(app.state, view.pending_recommendation);
  render(app);
}

function wireEvents(app: App): void {
  document.addEventListener("click", async (event) => {
    const target = event.target as HTMLElement;
    const action = target.dataset.action;
    if (!action) return;
    if (action === "toggle-paragraph") {
      app.draft = toggleParagraph(app.draft, Number(target.dataset.index));
    } else if (action === "toggle-product") {
      app.draft = toggleProduct(app.draft, target.dataset.id ?? "",
                                app.catalogIds);
      render(app);
    } else if (action === "accept" || action === "reject") {
      await api.postDecision(app.cid, buildDecisionPayload(
        app.token, action, target.dataset.id ?? ""));
    } else if (action === "toggle-turn") {
      app.form = toggleTurn(app.form, Number(target.dataset.seq));
    } else if (action === "rate") {
      app.form = { ...app.form,
                   rating: Number((target as HTMLInputElement).value) };
    } else if (action === "submit-questionnaire") {
      const record = buildQuestionnaireRecord(app.state, app.form, app.token);
      if (record === null) {
        app.form = { ...app.form,
                     error: "Please pick a rating before submitting." };
        render(app);
        return;
      }
      await api.postAnnotations([record]);
      app.form = { ...app.form, submitted: true, error: null };
      render(app);
    }
  });

  document.addEventListener("submit", async (event) => {
    const form = event.target as HTMLFormElement;
    const action = form.dataset.action;
    if (!action) return;
    event.preventDefault();
    if (action === "send") {
      const utterance = app.role === "seller"
        ? app.draft.text
        : (form.querySelector("textarea") as HTMLTextAreaElement).value;
      if (!utterance.trim()) return;
      const payload = buildMessagePayload(app.token,
                                          { ...app.draft, text: utterance });
      await api.postMessage(app.cid, payload);
      app.draft = emptyDraft(); // selection cleared on send
      await refresh(app);
    } else if (action === "search") {
      const q = (form.querySelector("input[name=q]") as HTMLInputElement).value;
      if (!q.trim()) return;
      const { results } = await api.searchCatalog(app.category, q, 4, app.cid);
      app.searchResults = results;
      render(app);
    }
  });
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const cid = params.get("cid") ?? "";
  const token = params.get("token") ?? "";
  const role = (token.split(".")[0] || "shopper") as Role;
  if (!cid || !token) {
    const root = document.getElementById("app");
    if (root) {
      root.innerHTML = "<p>Join with ?cid=&lt;session&gt;&amp;token=&lt;role " +
        "token&gt; from POST /v1/sessions.</p>";
    }
    return;
  }
  const view = await api.getSession(cid, token);
  const app: App = {
    cid, token, role, category: view.category,
    state: withPendingProducts(initialState(cid, role), view.pending_recommendation),
    draft: emptyDraft(), form: emptyQuestionnaire(),
    guide: [], searchResults: [], catalogIds: [],
  };
  if (role === "seller") {
    const [guide, catalog] = await Promise.all([
      api.guide(view.category), api.catalog(view.category)]);
    app.guide = guide.paragraphs;
    app.catalogIds = catalog.products.map((p) => p.id);
  }
  wireEvents(app);
  subscribeToSession("/v1", cid, token, (record) => {
    app.state = reduce(app.state, record);
    void refresh(app);
  }, () => void refresh(app));
  render(app);
}

void boot();
