/** Agents view: session table plus an interactive terminal pane.
 *
 * Each sent command goes through the one API call; the path toggle (or a
 * literal `@user ` prefix) selects the visible user-space route instead
 * of the default kernel route.
 */

import type { AppContext } from "../context.js";
import { clear, el, emptyState } from "../dom.js";
import { parseShellLine } from "../model.js";
import type { AgentInfo, CommandResult } from "../types.js";

export async function renderAgents(container: HTMLElement, ctx: AppContext): Promise<void> {
  clear(container);

  let agents: AgentInfo[];
  try {
    agents = await ctx.api.agents();
  } catch (error) {
    ctx.reportError(error);
    return;
  }

  if (agents.length === 0) {
    container.append(
      emptyState("No agents connected. Inject into a guest first."),
    );
    return;
  }

  const table = el("table", { class: "data" });
  table.append(
    el(
      "tr",
      {},
      ...["id", "guest", "state", "commands", "last seen"].map((h) => el("th", {}, h)),
    ),
  );
  for (const agent of agents) {
    table.append(
      el(
        "tr",
        {},
        el("td", {}, agent.id),
        el("td", {}, agent.guest),
        el("td", {}, agent.state),
        el("td", {}, String(agent.commands)),
        el("td", {}, agent.last_seen.toFixed(1)),
      ),
    );
  }
  container.append(table);

  const select = el("select", { "aria-label": "agent" });
  for (const agent of agents) {
    select.append(el("option", { value: agent.id }, `${agent.id} (${agent.guest})`));
  }
  const screen = el("pre", { class: "terminal" });
  const input = el("input", {
    class: "term-input",
    placeholder: "dir C:\\Users  |  read PATH  |  dump lsass.exe  |  usermode arp -a",
    "aria-label": "command line",
  });
  const userToggle = el("input", { type: "checkbox", id: "user-path" });
  const sendButton = el("button", {}, "Send");

  const print = (line: string, cls = ""): void => {
    const span = el("span", cls === "" ? {} : { class: cls }, line + "\n");
    screen.append(span);
    screen.scrollTop = screen.scrollHeight;
  };

  const loadHistory = async (): Promise<void> => {
    clear(screen);
    const page = await ctx.api.output(select.value, 0);
    for (const entry of page.entries) {
      renderResult(entry);
    }
  };

  const renderResult = (entry: CommandResult): void => {
    print(`${select.value}> ${entry.command}`, "prompt");
    if (entry.blocked) {
      print(`[BLOCKED] ${entry.output}`, "blocked");
    } else if (!entry.ok) {
      print(`[ERROR] ${entry.output}`, "error");
    } else if (entry.output !== "") {
      print(entry.output);
    }
  };

  const send = (): void => {
    const line = input.value.trim();
    if (line === "") {
      return;
    }
    input.value = "";
    ctx.run(async () => {
      let parsed;
      try {
        parsed = parseShellLine(line);
      } catch (error) {
        print((error as Error).message, "error");
        return;
      }
      const execPath = parsed.execPath ?? (userToggle.checked ? "user" : null);
      const entry = await ctx.api.command(
        select.value,
        parsed.command,
        parsed.args,
        execPath,
      );
      renderResult(entry);
    });
  };

  sendButton.addEventListener("click", send);
  input.addEventListener("keydown", (event) => {
    if (event.key === "Enter") {
      send();
    }
  });
  select.addEventListener("change", () => {
    ctx.run(loadHistory);
  });

  container.append(
    el(
      "div",
      { class: "panel" },
      el("h3", {}, "Terminal"),
      el("div", { class: "toolbar" }, select,
        el("label", { for: "user-path" }, userToggle, " user path"),
      ),
      screen,
      el("div", { class: "toolbar" }, input, sendButton),
    ),
  );
  await loadHistory();
}
