/** Shared wiring handed to every view. */

import type { RangeApi } from "./api.js";
import type { EventFeed } from "./feed.js";

export interface AppContext {
  api: RangeApi;
  feed: EventFeed;
  /** Run an async action, routing failures to the error surface. */
  run(action: () => Promise<void>): void;
  /** Surface an error (banner for connectivity, inline note otherwise). */
  reportError(error: unknown): void;
  /** Register cleanup for when the current view is torn down. */
  onDispose(cleanup: () => void): void;
}
