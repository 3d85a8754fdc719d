/** Metrics view: campaign progress table and injection reliability board. */

import type { AppContext } from "../context.js";
import { clear, el, emptyState } from "../dom.js";
import { bandLabel, progressLabel } from "../model.js";
import type { MetricsSummary } from "../types.js";

export async function renderMetrics(container: HTMLElement, ctx: AppContext): Promise<void> {
  clear(container);

  let summary: MetricsSummary;
  try {
    summary = await ctx.api.metrics();
  } catch (error) {
    ctx.reportError(error);
    return;
  }

  const opsPanel = el("div", { class: "panel" }, el("h3", {}, "Operations"));
  if (summary.operations.length === 0) {
    opsPanel.append(emptyState("No operations have run yet."));
  } else {
    const table = el("table", { class: "data" });
    table.append(
      el(
        "tr",
        {},
        ...["id", "profile", "product", "status", "progress", "detections"].map((h) =>
          el("th", {}, h),
        ),
      ),
    );
    for (const op of summary.operations) {
      table.append(
        el(
          "tr",
          {},
          el("td", {}, op.id),
          el("td", {}, op.profile),
          el("td", {}, op.av ?? "-"),
          el("td", {}, op.status),
          el("td", {}, progressLabel(op)),
          el("td", {}, String(op.detections)),
        ),
      );
    }
    opsPanel.append(table);
  }
  container.append(opsPanel);

  const relPanel = el("div", { class: "panel" }, el("h3", {}, "Injection reliability"));
  if (summary.reliability.runs.length === 0) {
    relPanel.append(emptyState("No reliability batches have run yet."));
  } else {
    const table = el("table", { class: "data" });
    table.append(
      el(
        "tr",
        {},
        ...["label", "injection time", "successes", "band"].map((h) => el("th", {}, h)),
      ),
    );
    for (const run of summary.reliability.runs) {
      table.append(
        el(
          "tr",
          {},
          el("td", {}, run.label === "" ? "-" : run.label),
          el("td", {}, `t+${run.injection_time.toFixed(0)}s`),
          el("td", {}, run.metric.exact),
          el("td", {}, bandLabel(run.metric)),
        ),
      );
    }
    if (summary.reliability.overall !== null) {
      const overall = summary.reliability.overall;
      table.append(
        el(
          "tr",
          { class: "overall" },
          el("td", {}, "overall"),
          el("td", {}, ""),
          el("td", {}, overall.exact),
          el("td", {}, bandLabel(overall)),
        ),
      );
    }
    relPanel.append(table);
  }
  container.append(relPanel);
}
