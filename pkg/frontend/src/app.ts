/**
 * Interactive evolution UI.
 *
 * One session per page: a creation form, the population grid with
 * two-parent selection, a t_interp/T schedule bar, and a history panel.
 * All displayed values come from API responses; the client never invents
 * generation numbers or schedule state locally.
 */

import { ApiClient, ApiError, ImageInfo, Population } from "./api.js";
import { submitEnabled, toggleSelection } from "./selection.js";

export interface AppHandles {
  root: HTMLElement;
  client: ApiClient;
  view(): Population | null;
  selected(): string[];
  ready: Promise<void>;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function lineageTitle(img: ImageInfo): string {
  if (!img.parent_ids) {
    return `${img.id}: initial sample`;
  }
  const lam = img.lambda === null ? "?" : img.lambda.toFixed(3);
  return `${img.id}: ${img.parent_ids[0]} x ${img.parent_ids[1]} (lambda=${lam})`;
}

export function mountApp(root: HTMLElement, client: ApiClient): AppHandles {
  const doc = root.ownerDocument;
  let view: Population | null = null;
  let selected: string[] = [];
  let inFlight = false;

  // --- static skeleton -----------------------------------------------------
  const form = el(doc, "form", "create-form");
  const modelSelect = el(doc, "select", "model-select");
  modelSelect.name = "model_id";
  const nInput = el(doc, "input", "n-input");
  nInput.name = "N";
  nInput.type = "number";
  nInput.value = "10";
  const t0Input = el(doc, "input", "t0-input");
  t0Input.name = "t_interp0";
  t0Input.type = "number";
  const sInput = el(doc, "input", "s-input");
  sInput.name = "s";
  sInput.type = "number";
  const seedInput = el(doc, "input", "seed-input");
  seedInput.name = "seed";
  seedInput.type = "number";
  const createBtn = el(doc, "button", "create-btn", "Start session");
  createBtn.type = "submit";

  const label = (text: string, input: HTMLElement) => {
    const wrap = el(doc, "label", undefined, text + " ");
    wrap.appendChild(input);
    return wrap;
  };
  form.append(
    label("model", modelSelect),
    label("population N", nInput),
    label("t_interp0", t0Input),
    label("step s", sInput),
    label("seed", seedInput),
    createBtn,
  );

  const session = el(doc, "section", "session");
  session.hidden = true;
  const header = el(doc, "header", "session-header");
  const genLabel = el(doc, "span", "generation-label");
  const tLabel = el(doc, "span", "t-interp-label");
  const tBar = el(doc, "progress", "t-interp-bar");
  const statusLabel = el(doc, "span", "status-label");
  header.append(genLabel, tLabel, tBar, statusLabel);

  const grid = el(doc, "div", "grid");
  const errorBox = el(doc, "div", "error-box");
  errorBox.hidden = true;
  const conflictBox = el(doc, "div", "conflict-box");
  conflictBox.hidden = true;
  const conflictMsg = el(doc, "span", "conflict-message",
    "A generation step is already running for this session.");
  const retryBtn = el(doc, "button", "retry-btn", "Retry");
  retryBtn.type = "button";
  conflictBox.append(conflictMsg, retryBtn);

  const submitBtn = el(doc, "button", "submit-btn", "Breed next generation");
  submitBtn.type = "button";
  submitBtn.disabled = true;
  const historyTitle = el(doc, "h2", "history-title", "History");
  const historyList = el(doc, "ol", "history");

  session.append(header, grid, errorBox, conflictBox, submitBtn, historyTitle, historyList);
  root.append(form, session);

  // --- rendering -----------------------------------------------------------
  function renderHeader(): void {
    if (!view) return;
    genLabel.textContent = `generation ${view.generation}`;
    tLabel.textContent = `t_interp ${view.t_interp}/${view.T}`;
    tBar.max = view.T;
    tBar.value = view.t_interp;
  }

  function renderGrid(): void {
    if (!view) return;
    grid.textContent = "";
    for (const img of view.images) {
      const tile = el(doc, "button", "tile");
      tile.type = "button";
      tile.dataset.id = img.id;
      tile.title = lineageTitle(img);
      const image = el(doc, "img", "tile-image");
      image.src = client.resolve(img.url);
      image.alt = img.id;
      tile.appendChild(image);
      tile.addEventListener("click", () => {
        selected = toggleSelection(selected, img.id);
        renderSelection();
      });
      grid.appendChild(tile);
    }
    renderSelection();
  }

  function renderSelection(): void {
    for (const tile of grid.querySelectorAll<HTMLButtonElement>(".tile")) {
      tile.classList.toggle("selected", selected.includes(tile.dataset.id ?? ""));
    }
    submitBtn.disabled = !submitEnabled(selected, inFlight);
  }

  function renderHistory(entries: { generation: number; parent_a: string; parent_b: string }[]): void {
    historyList.textContent = "";
    for (const entry of entries) {
      historyList.appendChild(el(doc, "li", "history-entry",
        `generation ${entry.generation}: ${entry.parent_a} x ${entry.parent_b}`));
    }
  }

  function applyView(pop: Population): void {
    view = pop;
    session.hidden = false;
    renderHeader();
    renderGrid();
  }

  function showError(message: string): void {
    errorBox.textContent = message;
    errorBox.hidden = false;
  }

  function clearNotices(): void {
    errorBox.hidden = true;
    errorBox.textContent = "";
    conflictBox.hidden = true;
  }

  // --- actions ---------------------------------------------------------------
  async function createSession(): Promise<void> {
    clearNotices();
    const params: Record<string, unknown> = { model_id: modelSelect.value };
    if (nInput.value) params.N = Number(nInput.value);
    if (t0Input.value) params.t_interp0 = Number(t0Input.value);
    if (sInput.value) params.s = Number(sInput.value);
    if (seedInput.value) params.seed = Number(seedInput.value);
    try {
      const pop = await client.createSession(params as never);
      selected = [];
      applyView(pop);
      renderHistory([]);
    } catch (err) {
      showError(err instanceof ApiError ? err.message : String(err));
    }
  }

  async function submitSelection(): Promise<void> {
    if (!view || !submitEnabled(selected, inFlight)) return;
    inFlight = true;
    clearNotices();
    statusLabel.textContent = "breeding next generation...";
    renderSelection();
    const [parentA, parentB] = selected;
    try {
      const pop = await client.select(view.session_id, parentA, parentB);
      selected = [];
      applyView(pop);
      renderHistory(await client.getHistory(pop.session_id));
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // step already in flight: offer a retry, do not fire a second POST
        conflictBox.hidden = false;
      } else {
        // validation or transport failure: keep the selection for correction
        showError(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
      }
    } finally {
      inFlight = false;
      statusLabel.textContent = "";
      renderSelection();
    }
  }

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void createSession();
  });
  submitBtn.addEventListener("click", () => void submitSelection());
  retryBtn.addEventListener("click", () => {
    conflictBox.hidden = true;
    void submitSelection();
  });

  const ready = client.listModels().then((models) => {
    modelSelect.textContent = "";
    for (const model of models) {
      const option = el(doc, "option", undefined, `${model.id} (T=${model.T})`);
      option.value = model.id;
      modelSelect.appendChild(option);
    }
  });

  return {
    root,
    client,
    view: () => view,
    selected: () => [...selected],
    ready,
  };
}
