// Thin DOM layer: paints a ViewModel into the page. All decisions were made
// in view.ts; this file only creates elements.

import type { ViewModel } from "./view.js";

export interface Handlers {
  onGateChange(gateId: number | null): void;
  onTimeChange(time: string | null): void;
  onSubmit(): void;
}

const SVG_NS = "http://www.w3.org/2000/svg";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function render(vm: ViewModel, root: HTMLElement, handlers: Handlers): void {
  root.replaceChildren();

  const banner = el("div", "banner");
  banner.hidden = vm.banner === null;
  banner.textContent = vm.banner ?? "";
  root.append(banner);

  const layout = el("div", "layout");
  root.append(layout);

  // --- occupancy map ---
  const mapPane = el("section", "map-pane");
  layout.append(mapPane);
  mapPane.append(el("h2", undefined, "Campus occupancy"));
  if (vm.placeholder !== null) {
    mapPane.append(el("p", "placeholder", vm.placeholder));
  } else {
    const svg = document.createElementNS(SVG_NS, "svg");
    svg.setAttribute("viewBox", "0 0 600 600");
    svg.classList.add("map");
    for (const section of vm.mapSections) {
      const polygon = document.createElementNS(SVG_NS, "polygon");
      polygon.setAttribute("points", section.points);
      polygon.setAttribute("fill", section.color);
      polygon.setAttribute("fill-opacity", "0.75");
      polygon.setAttribute("stroke", "#333");
      if (section.pulse) polygon.classList.add("pulse");
      svg.append(polygon);

      const title = document.createElementNS(SVG_NS, "title");
      title.textContent =
        `section ${section.sectionId}: ` +
        (section.state
          ? `${section.occupied}/${section.capacity} occupied (${section.ratePct}, ${section.state})`
          : `capacity ${section.capacity}`);
      polygon.append(title);
    }
    mapPane.append(svg);

    const legend = el("div", "legend");
    for (const item of vm.legend) {
      const entry = el("span", "legend-entry", item.state);
      entry.style.setProperty("--swatch", item.color);
      legend.append(entry);
    }
    mapPane.append(legend);
  }
  mapPane.append(el("p", "refresh-note", `auto-refreshes every ${vm.refreshSeconds} s`));

  // --- what-if form + recommendation card ---
  const sidePane = el("section", "side-pane");
  layout.append(sidePane);
  sidePane.append(el("h2", undefined, "Plan your arrival"));

  const form = el("form", "whatif");
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    handlers.onSubmit();
  });

  const gateSelect = el("select");
  gateSelect.append(new Option("select a gate", "", vm.form.gateId === null));
  for (const gate of vm.form.gates) {
    gateSelect.append(new Option(`Gate ${gate}`, String(gate), false, vm.form.gateId === gate));
  }
  gateSelect.addEventListener("change", () => {
    handlers.onGateChange(gateSelect.value === "" ? null : Number(gateSelect.value));
  });
  form.append(labelled("Entrance gate", gateSelect));

  const timeInput = el("input");
  timeInput.type = "time";
  timeInput.value = vm.form.time ?? "";
  timeInput.addEventListener("change", () => {
    handlers.onTimeChange(timeInput.value === "" ? null : timeInput.value);
  });
  form.append(
    labelled(
      vm.form.horizonLabel ? `Arrival time (${vm.form.horizonLabel})` : "Arrival time",
      timeInput,
    ),
  );

  const submit = el("button", undefined, vm.form.retryable ? "Retry" : "Recommend a section");
  submit.type = "submit";
  submit.disabled = !vm.form.submitEnabled && !vm.form.retryable;
  form.append(submit);

  if (vm.form.inlineError) {
    form.append(el("p", "inline-error", vm.form.inlineError));
  }
  sidePane.append(form);

  if (vm.card) {
    const card = el("div", "card");
    card.append(el("h3", undefined, `Section ${vm.card.sectionId}`));
    card.append(el("p", "vacant", `${vm.card.vacant} spaces predicted vacant`));
    card.append(el("p", undefined, `predicted availability ${vm.card.availabilityPct}`));
    const badge = el("span", "badge", vm.card.state);
    badge.style.setProperty("--swatch", vm.card.color);
    card.append(badge);
    card.append(el("p", "fingerprint", `model ${vm.card.fingerprint}`));
    sidePane.append(card);
  }
}

function labelled(text: string, control: HTMLElement): HTMLLabelElement {
  const label = document.createElement("label");
  label.append(text, control);
  return label;
}
