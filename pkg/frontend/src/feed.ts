/** Live event feed with a polling fallback.
 *
 * Prefers the server-sent-event stream; if the stream errors (restrictive
 * proxy, server restart) it drops to polling the paged endpoint every
 * two seconds. Either way events are delivered to subscribers in seq
 * order exactly once.
 */

import { ApiError, RangeApi } from "./api.js";
import type { FeedEvent } from "./types.js";

export type FeedState = "live" | "polling" | "down";

/** The subset of EventSource the feed relies on, for injectability. */
export interface EventSourceLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: (() => void) | null;
  close(): void;
}

export interface FeedOptions {
  api: RangeApi;
  /** Build the SSE connection; return null when SSE is unavailable. */
  makeSource?: (url: string) => EventSourceLike | null;
  base?: string;
  pollMs?: number;
  schedule?: (fn: () => void, ms: number) => ReturnType<typeof setTimeout>;
  cancel?: (id: ReturnType<typeof setTimeout>) => void;
}

export const POLL_MS = 2000;

/** Deliver the portion of `events` at or past `cursor`, in order, and
 * return the new cursor. Duplicates below the cursor are dropped. */
export function advanceCursor(
  cursor: number,
  events: FeedEvent[],
  emit: (event: FeedEvent) => void,
): number {
  const fresh = events
    .filter((e) => e.seq >= cursor)
    .sort((a, b) => a.seq - b.seq);
  for (const event of fresh) {
    emit(event);
    cursor = event.seq + 1;
  }
  return cursor;
}

function defaultSource(url: string): EventSourceLike | null {
  if (typeof EventSource === "undefined") {
    return null;
  }
  const native = new EventSource(url);
  const adapter: EventSourceLike = {
    onmessage: null,
    onerror: null,
    close: () => native.close(),
  };
  native.onmessage = (ev) => adapter.onmessage?.({ data: String(ev.data) });
  native.onerror = () => adapter.onerror?.();
  return adapter;
}

export class EventFeed {
  state: FeedState = "down";
  cursor = 0;

  private readonly api: RangeApi;
  private readonly makeSource: (url: string) => EventSourceLike | null;
  private readonly base: string;
  private readonly pollMs: number;
  private readonly schedule: (fn: () => void, ms: number) => ReturnType<typeof setTimeout>;
  private readonly cancel: (id: ReturnType<typeof setTimeout>) => void;

  private source: EventSourceLike | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;
  private readonly listeners = new Set<(event: FeedEvent) => void>();
  private readonly stateListeners = new Set<(state: FeedState) => void>();

  constructor(options: FeedOptions) {
    this.api = options.api;
    this.makeSource = options.makeSource ?? defaultSource;
    this.base = options.base ?? "";
    this.pollMs = options.pollMs ?? POLL_MS;
    this.schedule = options.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.cancel = options.cancel ?? ((id) => clearTimeout(id));
  }

  subscribe(listener: (event: FeedEvent) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  onState(listener: (state: FeedState) => void): () => void {
    this.stateListeners.add(listener);
    listener(this.state);
    return () => this.stateListeners.delete(listener);
  }

  start(): void {
    this.stopped = false;
    const url = `${this.base}/api/events?follow=true&since=${this.cursor}`;
    this.source = this.makeSource(url);
    if (this.source === null) {
      this.startPolling();
      return;
    }
    this.setState("live");
    this.source.onmessage = (message) => {
      const event = JSON.parse(message.data) as FeedEvent;
      this.cursor = advanceCursor(this.cursor, [event], (e) => this.emit(e));
    };
    this.source.onerror = () => {
      this.closeSource();
      if (!this.stopped) {
        this.startPolling();
      }
    };
  }

  stop(): void {
    this.stopped = true;
    this.closeSource();
    if (this.timer !== null) {
      this.cancel(this.timer);
      this.timer = null;
    }
    this.setState("down");
  }

  /** Manual retry after an outage: try SSE again from the current cursor. */
  retry(): void {
    this.stop();
    this.start();
  }

  private startPolling(): void {
    this.setState("polling");
    void this.pollOnce();
  }

  private async pollOnce(): Promise<void> {
    if (this.stopped) {
      return;
    }
    try {
      const page = await this.api.events(this.cursor);
      this.cursor = advanceCursor(this.cursor, page.events, (e) => this.emit(e));
      this.setState("polling");
    } catch (error) {
      if (error instanceof ApiError) {
        this.setState("down");
      } else {
        throw error;
      }
    }
    if (!this.stopped) {
      this.timer = this.schedule(() => void this.pollOnce(), this.pollMs);
    }
  }

  private emit(event: FeedEvent): void {
    for (const listener of this.listeners) {
      listener(event);
    }
  }

  private setState(state: FeedState): void {
    if (this.state !== state) {
      this.state = state;
      for (const listener of this.stateListeners) {
        listener(state);
      }
    }
  }

  private closeSource(): void {
    if (this.source !== null) {
      this.source.onmessage = null;
      this.source.onerror = null;
      this.source.close();
      this.source = null;
    }
  }
}
