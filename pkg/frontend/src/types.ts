/** Document shapes served by the range HTTP API.
 *
 * These mirror the service's response models one to one; the console
 * renders them as-is and computes nothing on its own.
 */

export interface GuestInfo {
  id: string;
  build_id: string;
  seed: number;
  clock: number;
  crashed: boolean;
  agent_loaded: boolean;
  av: string | null;
  kernel_base: string;
  config: string;
}

export interface TimelineStep {
  step: number;
  time: number;
  label: string;
}

export interface InjectResult {
  guest: string;
  agent: string | null;
  status: string;
  region_name: string;
  region_paddr: number;
  timeline: TimelineStep[];
  crash_step: number | null;
  agent_paddr: number | null;
  egg: string | null;
  started_at: number;
  finished_at: number;
}

export interface AgentInfo {
  id: string;
  guest: string;
  state: string;
  connected_at: number;
  last_seen: number;
  commands: number;
}

export interface CommandResult {
  agent: string;
  command: string;
  args: Record<string, unknown>;
  status: number;
  ok: boolean;
  blocked: boolean;
  output: string;
  clock: number;
}

export interface ProgressOut {
  numerator: number;
  denominator: number;
  exact: string;
  value: number;
  margin: number;
  band: [number, number];
}

export interface DetectionOut {
  av: string;
  rule: string;
  kind: string;
  category: string;
  target: string;
  time: number;
}

export interface ActionOut {
  id: string;
  step: string;
  command: string;
  args: Record<string, unknown>;
  exec_path: string;
  lane: number;
  instance: number;
  status: string;
  output: string;
  executed_at: number | null;
  detection: DetectionOut | null;
  fact: string | null;
}

export interface FactOut {
  name: string;
  value: string;
  step: string;
  seq: number;
}

export interface OperationDoc {
  id: string;
  profile: string;
  av: string | null;
  guest: string;
  agent: string | null;
  seed: number;
  injection_time: number;
  status: string;
  planned: number;
  executed: number;
  progress: ProgressOut | null;
  detections: DetectionOut[];
  facts: FactOut[];
  started_clock: number;
  finished_clock: number;
  injection: InjectResult | null;
  actions: ActionOut[];
}

export interface OperationSummary {
  id: string;
  profile: string;
  av: string | null;
  guest: string;
  status: string;
  planned: number;
  executed: number;
  progress: ProgressOut | null;
  detections: number;
}

export interface MetricOut {
  numerator: number;
  denominator: number;
  exact: string;
  value: number;
  margin: number;
  band: [number, number];
}

export interface ReliabilityRunOut {
  label: string;
  trials: number;
  injection_time: number;
  successes: number;
  metric: MetricOut;
}

export interface MetricsSummary {
  operations: Array<{
    id: string;
    profile: string;
    av: string | null;
    status: string;
    planned: number;
    executed: number;
    progress: ProgressOut | null;
    detections: number;
  }>;
  reliability: {
    runs: ReliabilityRunOut[];
    overall: MetricOut | null;
  };
}

export interface ProfileInfo {
  name: string;
  display_name: string;
  description: string;
  steps: number;
  commands: string[];
}

export interface AvInfo {
  name: string;
  display_name: string;
  gate_requires_approval: boolean;
  static_signatures: string[];
  rules: Array<{ id: string; category: string; target_pattern: string | null }>;
  detections: number;
}

export interface FeedEvent {
  seq: number;
  ts: string;
  kind: string;
  data: Record<string, unknown>;
}

export interface EventsPage {
  events: FeedEvent[];
  next: number;
}
