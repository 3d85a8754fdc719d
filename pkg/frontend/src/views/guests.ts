/** Guests view: boot controls, guest table, injection timeline. */

import type { AppContext } from "../context.js";
import { clear, el, emptyState } from "../dom.js";
import { timelineRows } from "../model.js";
import type { GuestInfo, InjectResult } from "../types.js";

export async function renderGuests(container: HTMLElement, ctx: AppContext): Promise<void> {
  clear(container);

  const seedInput = el("input", {
    type: "number",
    placeholder: "seed (optional)",
    "aria-label": "seed",
  });
  const bootButton = el("button", {}, "Boot guest");
  bootButton.addEventListener("click", () => {
    const seed = seedInput.value === "" ? null : Number(seedInput.value);
    ctx.run(async () => {
      await ctx.api.boot(seed);
      await renderGuests(container, ctx);
    });
  });
  container.append(el("div", { class: "toolbar" }, seedInput, bootButton));

  const timelinePanel = el("div", { class: "panel timeline-panel" });

  let guests: GuestInfo[];
  try {
    guests = await ctx.api.guests();
  } catch (error) {
    ctx.reportError(error);
    return;
  }

  if (guests.length === 0) {
    container.append(emptyState("No guests yet. Boot one to get started."));
    return;
  }

  const table = el("table", { class: "data" });
  table.append(
    el(
      "tr",
      {},
      ...["id", "build", "seed", "clock", "state", "product", "agent", ""].map((h) =>
        el("th", {}, h),
      ),
    ),
  );
  for (const guest of guests) {
    const atInput = el("input", {
      type: "number",
      value: "60",
      class: "at-input",
      "aria-label": `inject time for ${guest.id}`,
    });
    const injectButton = el("button", {}, "Inject");
    injectButton.addEventListener("click", () => {
      ctx.run(async () => {
        const outcome = await ctx.api.inject(guest.id, Number(atInput.value));
        showTimeline(timelinePanel, guest.id, outcome);
        const refreshed = await ctx.api.guests();
        guests = refreshed;
      });
    });
    table.append(
      el(
        "tr",
        {},
        el("td", {}, guest.id),
        el("td", {}, guest.build_id),
        el("td", {}, String(guest.seed)),
        el("td", {}, guest.clock.toFixed(1)),
        el("td", {}, guest.crashed ? "crashed" : "running"),
        el("td", {}, guest.av ?? "-"),
        el("td", {}, guest.agent_loaded ? "loaded" : "-"),
        el("td", {}, atInput, injectButton),
      ),
    );
  }
  container.append(table, timelinePanel);
}

function showTimeline(panel: HTMLElement, guestId: string, outcome: InjectResult): void {
  clear(panel);
  panel.append(el("h3", {}, `Injection into ${guestId}: ${outcome.status}`));
  const list = el("ol", { class: "timeline" });
  for (const row of timelineRows(outcome)) {
    list.append(
      el(
        "li",
        { class: row.failed ? "step failed" : "step" },
        el("span", { class: "step-no" }, String(row.step)),
        el("span", { class: "step-time" }, `t=${row.time}`),
        el("span", {}, row.label),
      ),
    );
  }
  panel.append(list);
  if (outcome.agent) {
    panel.append(el("p", {}, `Agent ${outcome.agent} connected.`));
  }
}
