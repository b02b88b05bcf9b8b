/** DOM rendering for the panel; all data arrives via the RenderModel. */

import type { RenderModel } from "./panel.js";

export interface PanelElements {
  grid: HTMLElement;
  sentences: HTMLElement;
  summary: HTMLElement;
  comparison: HTMLElement;
  banner: HTMLElement;
  epsNSlider: HTMLInputElement;
  epsRSlider: HTMLInputElement;
  epsNValue: HTMLElement;
  epsRValue: HTMLElement;
}

export function renderPanel(els: PanelElements, model: RenderModel): void {
  renderBanner(els.banner, model);
  renderGrid(els.grid, model);
  renderSentences(els.sentences, model);
  renderSummary(els.summary, model);
  renderComparison(els.comparison, model);
  // sliders reflect state so a 422 revert snaps them back
  els.epsNSlider.value = String(model.epsN);
  els.epsRSlider.value = String(model.epsR);
  els.epsNValue.textContent = model.epsN.toFixed(2);
  els.epsRValue.textContent = model.epsR.toFixed(2);
}

function renderBanner(el: HTMLElement, model: RenderModel): void {
  if (model.banner === null) {
    el.hidden = true;
    el.textContent = "";
    return;
  }
  el.hidden = false;
  el.className = `banner banner-${model.banner.kind}`;
  el.textContent =
    model.banner.kind === "retry"
      ? `${model.banner.text} — adjust a slider to retry`
      : model.banner.text;
}

function renderGrid(el: HTMLElement, model: RenderModel): void {
  el.textContent = "";
  if (model.heatmap === null) {
    return;
  }
  const { n, cells } = model.heatmap;
  el.style.gridTemplateColumns = `repeat(${n}, 1fr)`;
  for (const cell of cells) {
    const div = document.createElement("div");
    div.className = cell.masked ? "cell masked" : "cell";
    div.style.backgroundColor = cell.color;
    div.title = cell.tooltip;
    el.appendChild(div);
  }
}

function renderSentences(el: HTMLElement, model: RenderModel): void {
  el.textContent = "";
  for (const row of model.sentences) {
    const li = document.createElement("li");
    li.className = row.selected ? "sentence selected" : "sentence";
    const bar = document.createElement("span");
    bar.className = "bar";
    bar.style.width = `${(row.bar * 100).toFixed(1)}%`;
    const label = document.createElement("span");
    label.className = "sentence-text";
    label.textContent = `${row.index + 1}. ${row.text}`;
    const score = document.createElement("span");
    score.className = "score";
    score.textContent = row.centrality.toFixed(3);
    li.append(bar, label, score);
    el.appendChild(li);
  }
}

function renderSummary(el: HTMLElement, model: RenderModel): void {
  el.textContent = model.summary ?? "";
  el.classList.toggle("busy", model.busy);
}

function renderComparison(el: HTMLElement, model: RenderModel): void {
  if (model.comparison === null) {
    el.hidden = true;
    el.textContent = "";
    return;
  }
  el.hidden = false;
  el.textContent = "";
  const head = document.createElement("h3");
  head.textContent =
    `pinned @ eps_n=${model.comparison.epsN.toFixed(2)}, ` +
    `eps_r=${model.comparison.epsR.toFixed(2)}`;
  const body = document.createElement("p");
  body.textContent = model.comparison.summary;
  el.append(head, body);
}
