/** Page wiring: controls, debounced threshold changes, rendering. */

import { ApiClient } from "./api.js";
import { renderPanel, type PanelElements } from "./dom.js";
import { PanelController } from "./panel.js";
import { debounce } from "./state.js";
import type { Mode } from "./types.js";

const DEBOUNCE_MS = 250;

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (found === null) {
    throw new Error(`missing element #${id}`);
  }
  return found as T;
}

function start(): void {
  const elements: PanelElements = {
    grid: el("grid"),
    sentences: el("sentences"),
    summary: el("summary"),
    comparison: el("comparison"),
    banner: el("banner"),
    epsNSlider: el<HTMLInputElement>("eps-n"),
    epsRSlider: el<HTMLInputElement>("eps-r"),
    epsNValue: el("eps-n-value"),
    epsRValue: el("eps-r-value"),
  };
  const serviceUrl = el<HTMLInputElement>("service-url");
  let controller = makeController();

  function makeController(): PanelController {
    const api = new ApiClient(serviceUrl.value);
    return new PanelController(api, (model) => renderPanel(elements, model));
  }

  serviceUrl.addEventListener("change", () => {
    controller = makeController();
  });

  el<HTMLButtonElement>("load").addEventListener("click", () => {
    const text = el<HTMLTextAreaElement>("doc-text").value;
    const title = el<HTMLInputElement>("doc-title").value || undefined;
    void controller.loadDocument(text, title);
  });

  const pushThresholds = debounce(() => {
    void controller.setThresholds(
      Number(elements.epsNSlider.value),
      Number(elements.epsRSlider.value),
    );
  }, DEBOUNCE_MS);
  elements.epsNSlider.addEventListener("input", pushThresholds);
  elements.epsRSlider.addEventListener("input", pushThresholds);

  el<HTMLSelectElement>("mode").addEventListener("change", (ev) => {
    const mode = (ev.target as HTMLSelectElement).value as Mode;
    void controller.setMode(mode);
  });

  el<HTMLButtonElement>("pin").addEventListener("click", () => {
    controller.pinComparison();
  });
}

document.addEventListener("DOMContentLoaded", start);
