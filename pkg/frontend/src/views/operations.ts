/** Operations view: launcher, live step lanes with badges, history table.
 *
 * Lane states update from the event stream while a run is in flight and
 * are reconciled against the final record when the launch call returns.
 * The progress fraction is always the service's own number.
 */

import type { AppContext } from "../context.js";
import { clear, el, emptyState } from "../dom.js";
import {
  applyActionEvent,
  describeOperationStatus,
  lanes,
  progressLabel,
  type Lane,
} from "../model.js";
import type { OperationDoc } from "../types.js";

const BADGE_GLYPH: Record<string, string> = {
  executed: "✓",
  blocked: "⛔",
  failed: "✗",
  pending: "·",
};

export async function renderOperations(
  container: HTMLElement,
  ctx: AppContext,
): Promise<void> {
  clear(container);

  const lanePanel = el("div", { class: "panel" });
  let liveLanes: Lane[] = [];
  let liveOpId: string | null = null;

  // One stream subscription per open operations view.
  const unsubscribe = ctx.feed.subscribe((event) => {
    if (event.kind === "operation.action" && event.data["operation"] === liveOpId) {
      liveLanes = applyActionEvent(liveLanes, event);
      drawLanes(lanePanel, liveOpId ?? "", liveLanes, null);
    }
  });
  ctx.onDispose(unsubscribe);

  let profiles;
  let avs;
  try {
    [profiles, avs] = await Promise.all([ctx.api.profiles(), ctx.api.avs()]);
  } catch (error) {
    ctx.reportError(error);
    return;
  }

  const profileSelect = el("select", { "aria-label": "profile" });
  for (const profile of profiles) {
    profileSelect.append(
      el("option", { value: profile.name }, `${profile.display_name} (${profile.steps} steps)`),
    );
  }
  const avSelect = el("select", { "aria-label": "product" });
  avSelect.append(el("option", { value: "" }, "no product"));
  for (const av of avs) {
    avSelect.append(el("option", { value: av.name }, av.display_name));
  }
  const runButton = el("button", {}, "Launch");
  runButton.addEventListener("click", () => {
    runButton.setAttribute("disabled", "disabled");
    liveOpId = "pending";
    ctx.run(async () => {
      try {
        const record = await ctx.api.runOperation({
          profile: profileSelect.value,
          av: avSelect.value === "" ? null : avSelect.value,
        });
        liveOpId = record.id;
        liveLanes = lanes(record);
        drawLanes(lanePanel, record.id, liveLanes, record);
        await drawTable();
      } finally {
        runButton.removeAttribute("disabled");
      }
    });
  });

  container.append(
    el("div", { class: "toolbar" }, profileSelect, avSelect, runButton),
    lanePanel,
  );

  const tablePanel = el("div", { class: "panel" });
  container.append(tablePanel);

  const drawTable = async (): Promise<void> => {
    const summaries = await ctx.api.operations();
    clear(tablePanel);
    if (summaries.length === 0) {
      tablePanel.append(emptyState("No operations have run yet."));
      return;
    }
    const table = el("table", { class: "data" });
    table.append(
      el(
        "tr",
        {},
        ...["id", "profile", "product", "status", "progress", "detections", ""].map(
          (h) => el("th", {}, h),
        ),
      ),
    );
    for (const summary of summaries) {
      const openButton = el("button", { class: "link" }, "open");
      openButton.addEventListener("click", () => {
        ctx.run(async () => {
          const record = await ctx.api.operation(summary.id);
          liveOpId = record.id;
          liveLanes = lanes(record);
          drawLanes(lanePanel, record.id, liveLanes, record);
        });
      });
      table.append(
        el(
          "tr",
          {},
          el("td", {}, summary.id),
          el("td", {}, summary.profile),
          el("td", {}, summary.av ?? "-"),
          el("td", {}, describeOperationStatus(summary.status)),
          el("td", {}, progressLabel(summary)),
          el("td", {}, String(summary.detections)),
          el("td", {}, openButton),
        ),
      );
    }
    tablePanel.append(table);
  };

  await drawTable();
}

function drawLanes(
  panel: HTMLElement,
  opId: string,
  laneList: Lane[],
  record: OperationDoc | null,
): void {
  clear(panel);
  if (laneList.length === 0) {
    panel.append(emptyState("Launch an operation to see its step lanes."));
    return;
  }
  const heading =
    record === null
      ? `Operation ${opId}`
      : `Operation ${opId}: ${describeOperationStatus(record.status)} ` +
        `— progress ${progressLabel(record)}`;
  panel.append(el("h3", {}, heading));
  const list = el("ul", { class: "lanes" });
  for (const lane of laneList) {
    const badge = el(
      "span",
      { class: `badge ${lane.status}`, "data-status": lane.status },
      BADGE_GLYPH[lane.status] ?? "?",
    );
    const item = el(
      "li",
      { class: "lane" },
      badge,
      el("span", { class: "lane-id" }, lane.id),
      el("span", { class: "lane-cmd" }, lane.command),
      el("span", { class: "lane-path" }, lane.execPath),
    );
    if (lane.detectionRule !== null) {
      item.append(el("span", { class: "detection" }, `blocked by ${lane.detectionRule}`));
    }
    list.append(item);
  }
  panel.append(list);
  if (record !== null && record.detections.length > 0) {
    panel.append(
      el(
        "p",
        { class: "detections-note" },
        `${record.detections.length} detection event(s); run halted.`,
      ),
    );
  }
}
