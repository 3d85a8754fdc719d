/** Application shell: tabs, connectivity banner, view lifecycle. */

import { ApiError, RangeApi } from "./api.js";
import type { AppContext } from "./context.js";
import { clear, el } from "./dom.js";
import { EventFeed } from "./feed.js";
import { renderAgents } from "./views/agents.js";
import { renderGuests } from "./views/guests.js";
import { renderMetrics } from "./views/metrics.js";
import { renderOperations } from "./views/operations.js";

type ViewName = "guests" | "agents" | "operations" | "metrics";

const VIEWS: Record<ViewName, (c: HTMLElement, ctx: AppContext) => Promise<void>> = {
  guests: renderGuests,
  agents: renderAgents,
  operations: renderOperations,
  metrics: renderMetrics,
};

export function mountApp(root: HTMLElement, apiBase = ""): void {
  const api = new RangeApi(apiBase);
  const feed = new EventFeed({ api, base: apiBase });

  const banner = el("div", { class: "banner hidden" });
  const tabs = el("nav", { class: "tabs" });
  const main = el("main", { class: "view" });
  const errorNote = el("div", { class: "error-note hidden" });
  root.append(banner, tabs, errorNote, main);

  let active: ViewName = "guests";
  let disposers: Array<() => void> = [];

  const setBanner = (state: "live" | "polling" | "down"): void => {
    clear(banner);
    if (state === "live") {
      banner.className = "banner hidden";
      return;
    }
    if (state === "polling") {
      banner.className = "banner polling";
      banner.append("Event stream unavailable; polling every 2 s.");
      return;
    }
    banner.className = "banner down";
    const retry = el("button", {}, "Retry");
    retry.addEventListener("click", () => {
      feed.retry();
      void show(active);
    });
    banner.append("Cannot reach the range service. ", retry);
  };

  feed.onState(setBanner);

  const ctx: AppContext = {
    api,
    feed,
    run(action) {
      void action().catch((error) => ctx.reportError(error));
    },
    reportError(error) {
      if (error instanceof ApiError && error.status === 0) {
        setBanner("down");
        return;
      }
      errorNote.className = "error-note";
      clear(errorNote);
      errorNote.append(
        error instanceof Error ? error.message : String(error),
      );
    },
    onDispose(cleanup) {
      disposers.push(cleanup);
    },
  };

  const show = async (name: ViewName): Promise<void> => {
    for (const dispose of disposers) {
      dispose();
    }
    disposers = [];
    active = name;
    errorNote.className = "error-note hidden";
    for (const button of tabs.querySelectorAll("button")) {
      button.classList.toggle("active", button.dataset["view"] === name);
    }
    clear(main);
    try {
      await VIEWS[name](main, ctx);
    } catch (error) {
      ctx.reportError(error);
    }
  };

  for (const name of Object.keys(VIEWS) as ViewName[]) {
    const button = el("button", { "data-view": name }, name);
    button.addEventListener("click", () => void show(name));
    tabs.append(button);
  }

  feed.start();
  void show("guests");
}
