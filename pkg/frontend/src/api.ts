/** Thin typed client over the range HTTP API. */

import type {
  AgentInfo,
  AvInfo,
  CommandResult,
  EventsPage,
  FactOut,
  GuestInfo,
  InjectResult,
  MetricsSummary,
  OperationDoc,
  OperationSummary,
  ProfileInfo,
} from "./types.js";

export class ApiError extends Error {
  /** status 0 means the service was unreachable at the transport level. */
  constructor(readonly status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class RangeApi {
  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.base + path, {
        method,
        headers: body === undefined ? undefined : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch {
      throw new ApiError(0, "cannot reach the range service");
    }
    if (!response.ok) {
      let detail = `request failed (${response.status})`;
      try {
        const doc = (await response.json()) as { detail?: string; error?: string };
        detail = doc.detail ?? doc.error ?? detail;
      } catch {
        /* non-JSON error body; keep the generic detail */
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  guests(): Promise<GuestInfo[]> {
    return this.request("GET", "/api/guests");
  }

  boot(seed: number | null, config: string | null = null): Promise<GuestInfo> {
    return this.request("POST", "/api/guests", { seed, config });
  }

  inject(guestId: string, injectionTime: number): Promise<InjectResult> {
    return this.request("POST", `/api/guests/${guestId}/inject`, {
      injection_time: injectionTime,
    });
  }

  agents(): Promise<AgentInfo[]> {
    return this.request("GET", "/api/agents");
  }

  command(
    agentId: string,
    command: string,
    args: Record<string, unknown>,
    execPath: string | null,
  ): Promise<CommandResult> {
    return this.request("POST", `/api/agents/${agentId}/command`, {
      command,
      args,
      exec_path: execPath,
    });
  }

  output(agentId: string, since = 0): Promise<{ entries: CommandResult[]; next: number }> {
    return this.request("GET", `/api/agents/${agentId}/output?since=${since}`);
  }

  operations(): Promise<OperationSummary[]> {
    return this.request("GET", "/api/operations");
  }

  runOperation(body: {
    profile: string;
    av: string | null;
    guest?: string | null;
    seed?: number | null;
    injection_time?: number;
  }): Promise<OperationDoc> {
    return this.request("POST", "/api/operations", body);
  }

  operation(opId: string): Promise<OperationDoc> {
    return this.request("GET", `/api/operations/${opId}`);
  }

  facts(opId: string): Promise<FactOut[]> {
    return this.request("GET", `/api/facts?operation=${opId}`);
  }

  metrics(): Promise<MetricsSummary> {
    return this.request("GET", "/api/metrics");
  }

  profiles(): Promise<ProfileInfo[]> {
    return this.request("GET", "/api/profiles");
  }

  avs(): Promise<AvInfo[]> {
    return this.request("GET", "/api/avs");
  }

  events(since: number): Promise<EventsPage> {
    return this.request("GET", `/api/events?since=${since}`);
  }
}
