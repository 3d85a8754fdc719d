/** Pure view-model helpers.
 *
 * Everything here maps API documents to render-ready structures without
 * computing any campaign numbers itself; fractions, margins, and bands
 * always come from the service.
 */

import type {
  ActionOut,
  FeedEvent,
  InjectResult,
  MetricOut,
  OperationDoc,
  TimelineStep,
} from "./types.js";

export type BadgeKind = "executed" | "blocked" | "failed" | "pending";

export interface Lane {
  id: string;
  lane: number;
  command: string;
  execPath: string;
  status: BadgeKind;
  output: string;
  detectionRule: string | null;
}

const KNOWN_BADGES: ReadonlySet<string> = new Set([
  "executed",
  "blocked",
  "failed",
  "pending",
]);

export function lanes(operation: OperationDoc): Lane[] {
  return operation.actions.map((action: ActionOut) => ({
    id: action.id,
    lane: action.lane,
    command: action.command,
    execPath: action.exec_path,
    status: (KNOWN_BADGES.has(action.status) ? action.status : "pending") as BadgeKind,
    output: action.output,
    detectionRule: action.detection?.rule ?? null,
  }));
}

export function blockedBadgeCount(operation: OperationDoc): number {
  return lanes(operation).filter((lane) => lane.status === "blocked").length;
}

/** The running N_EA/N_PA string, straight from the API. */
export function progressLabel(operation: {
  progress: { exact: string } | null;
}): string {
  return operation.progress?.exact ?? "n/a";
}

export function bandLabel(metric: MetricOut): string {
  const [low, high] = metric.band;
  return `[${low.toFixed(2)}, ${high.toFixed(2)}]`;
}

export interface TimelineRow {
  step: number;
  time: string;
  label: string;
  failed: boolean;
}

export function timelineRows(outcome: InjectResult): TimelineRow[] {
  return outcome.timeline.map((entry: TimelineStep) => ({
    step: entry.step,
    time: entry.time.toFixed(3),
    label: entry.label,
    failed: outcome.status !== "success" && entry.step === outcome.timeline.length,
  }));
}

export function describeOperationStatus(status: string): string {
  if (status.startsWith("injection_")) {
    return `injection failed (${status.slice("injection_".length)})`;
  }
  return status;
}

/** Fold a live `operation.action` feed event into the lane list. */
export function applyActionEvent(current: Lane[], event: FeedEvent): Lane[] {
  if (event.kind !== "operation.action") {
    return current;
  }
  const actionId = event.data["action"];
  const blocked = event.data["blocked"] === true;
  return current.map((lane) => {
    if (lane.id !== actionId) {
      return lane;
    }
    return { ...lane, status: blocked ? "blocked" : "executed" };
  });
}

// -- terminal command parsing --------------------------------------------------

export interface ParsedLine {
  command: string;
  args: Record<string, string>;
  execPath: string | null;
}

/** Split on whitespace while honoring quotes; backslashes are kept as-is
 * so Windows paths survive. Surrounding quotes are stripped per token. */
export function tokenize(line: string): string[] {
  const tokens: string[] = [];
  let current = "";
  let quote: string | null = null;
  for (const ch of line) {
    if (quote !== null) {
      if (ch === quote) {
        quote = null;
      } else {
        current += ch;
      }
    } else if (ch === '"' || ch === "'") {
      quote = ch;
    } else if (ch === " " || ch === "\t") {
      if (current !== "") {
        tokens.push(current);
        current = "";
      }
    } else {
      current += ch;
    }
  }
  if (current !== "") {
    tokens.push(current);
  }
  return tokens;
}

export function parseShellLine(raw: string): ParsedLine {
  let line = raw.trim();
  let execPath: string | null = null;
  if (line.startsWith("@user ")) {
    execPath = "user";
    line = line.slice("@user ".length);
  }
  const parts = tokenize(line);
  if (parts.length === 0) {
    throw new Error("usage: <command> [args]");
  }
  const command = (parts[0] as string).toLowerCase();
  const rest = parts.slice(1);
  let args: Record<string, string> = {};
  switch (command) {
    case "dir":
    case "read":
      if (rest[0] !== undefined) {
        args = { path: rest[0] };
      }
      break;
    case "write":
      if (rest.length < 2) {
        throw new Error("usage: write <path> <data>");
      }
      args = { path: rest[0] as string, data: rest.slice(1).join(" ") };
      break;
    case "setkey":
      if (rest.length < 3) {
        throw new Error("usage: setkey <hive> <key> <value>");
      }
      args = {
        hive: rest[0] as string,
        key: rest[1] as string,
        value: rest[2] as string,
      };
      break;
    case "dump":
      if (rest.length === 0) {
        throw new Error("usage: dump <process>");
      }
      args = { process: rest[0] as string };
      break;
    case "usermode":
      args = { command: rest.join(" ") };
      break;
    case "echo":
      args = { text: rest.join(" ") };
      break;
    default:
      args = {};
  }
  return { command, args, execPath };
}
