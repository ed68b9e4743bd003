/** DOM wiring for the studio page. All enhancement is server-side; this
 * layer only previews uploads, renders served results, and forwards
 * parameter changes to the controller. */

import { EnhanceClient } from "./api.js";
import { StudioController } from "./controller.js";
import { resizeReference } from "./resize.js";
import type { SessionState } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

function setup(): void {
  const client = new EnhanceClient((url, init) => fetch(url, init));
  const controller = new StudioController(client);

  const inputFile = el<HTMLInputElement>("input-file");
  const referenceFile = el<HTMLInputElement>("reference-file");
  const clearReference = el<HTMLButtonElement>("clear-reference");
  const enhanceButton = el<HTMLButtonElement>("enhance-button");
  const omegaSlider = el<HTMLInputElement>("omega-slider");
  const omegaValue = el<HTMLSpanElement>("omega-value");
  const gammaRow = el<HTMLDivElement>("gamma-row");
  const gammaSlider = el<HTMLInputElement>("gamma-slider");
  const gammaValue = el<HTMLSpanElement>("gamma-value");
  const beforeImg = el<HTMLImageElement>("before-img");
  const afterImg = el<HTMLImageElement>("after-img");
  const refPreview = el<HTMLImageElement>("reference-preview");
  const compare = el<HTMLDivElement>("compare");
  const toggleButton = el<HTMLButtonElement>("toggle-view");
  const downloadLink = el<HTMLAnchorElement>("download-link");
  const metadataStrip = el<HTMLDivElement>("metadata");
  const statusLine = el<HTMLDivElement>("status");
  const zoomSlider = el<HTMLInputElement>("zoom-slider");

  let afterUrl: string | null = null;
  let showingAfter = true;

  inputFile.addEventListener("change", () => {
    const file = inputFile.files?.[0] ?? null;
    controller.setInputImage(file);
    if (file !== null) {
      beforeImg.src = URL.createObjectURL(file);
      enhanceButton.disabled = false;
    }
  });

  referenceFile.addEventListener("change", async () => {
    const file = referenceFile.files?.[0] ?? null;
    if (file === null) {
      controller.setReferenceImage(null);
      return;
    }
    const resized = await resizeReference(file);
    refPreview.src = URL.createObjectURL(resized);
    controller.setReferenceImage(resized);
  });

  clearReference.addEventListener("click", () => {
    referenceFile.value = "";
    refPreview.removeAttribute("src");
    controller.setReferenceImage(null);
  });

  enhanceButton.addEventListener("click", () => controller.enhance());

  omegaSlider.addEventListener("input", () => {
    omegaValue.textContent = Number(omegaSlider.value).toFixed(2);
  });
  omegaSlider.addEventListener("change", () => {
    controller.setOmega(Number(omegaSlider.value));
  });
  gammaSlider.addEventListener("input", () => {
    gammaValue.textContent = Number(gammaSlider.value).toFixed(2);
  });
  gammaSlider.addEventListener("change", () => {
    controller.setGamma(Number(gammaSlider.value));
  });

  toggleButton.addEventListener("click", () => {
    showingAfter = !showingAfter;
    compare.classList.toggle("show-before", !showingAfter);
    toggleButton.textContent = showingAfter ? "show input" : "show result";
  });

  zoomSlider.addEventListener("input", () => {
    const z = Number(zoomSlider.value);
    beforeImg.style.transform = `scale(${z})`;
    afterImg.style.transform = `scale(${z})`;
  });

  controller.subscribe((state: SessionState) => {
    statusLine.textContent = state.requestInFlight
      ? "enhancing…"
      : state.error !== null
        ? `error: ${state.error}`
        : "";
    statusLine.classList.toggle("error", state.error !== null);
    gammaRow.hidden = state.referenceImage === null;

    if (state.lastResult !== null) {
      const { blob, metadata } = state.lastResult;
      if (afterUrl !== null) URL.revokeObjectURL(afterUrl);
      afterUrl = URL.createObjectURL(blob);
      afterImg.src = afterUrl;
      downloadLink.href = afterUrl; // the served bytes, unmodified
      downloadLink.download = "enhanced.png";
      downloadLink.removeAttribute("aria-disabled");
      metadataStrip.textContent =
        `ω=${metadata.omega}  γ=${metadata.gamma}  ` +
        `reference=${metadata.usedReference ? "yes" : "no"}  ` +
        `model=${metadata.modelId.slice(0, 8)}  ${metadata.latencyMs.toFixed(0)} ms`;
    }
  });

  void client.health().then((body) => {
    if (body.status !== "ok") {
      statusLine.textContent = "service has no model loaded";
      statusLine.classList.add("error");
    }
  });
}

document.addEventListener("DOMContentLoaded", setup);
