// Console session: view mode, live data refresh, SSE with polling fallback.
//
// Operator mode is the realistic limited view: it never requests the
// ground-truth endpoint, so no actual-state field can appear in any
// message this session consumes. Researcher mode adds the actual and
// estimated overlays for divergence analysis.

import type {
  ActualInfo, ApiClient, EstimateInfo, SimEvent, StatusInfo, Topology,
} from "./api.js";
import { TelemetryStore } from "./store.js";
import { Timeline } from "./timeline.js";
import { CommandTracker } from "./commands.js";

export type ViewMode = "operator" | "researcher";

export interface EventSourceLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export const POLL_FALLBACK_MS = 2000;
export const BACKOFF_START_MS = 1000;
export const BACKOFF_MAX_MS = 15000;

export class ConsoleSession {
  readonly store = new TelemetryStore();
  readonly timeline = new Timeline();
  readonly commands: CommandTracker;
  topology: Topology | null = null;
  status: StatusInfo | null = null;
  estimate: EstimateInfo | null = null;
  actual: ActualInfo | null = null; // researcher mode only, by construction
  connections: Record<string, string> = {};
  staleTimeoutS: number;
  streamConnected = false;
  private stream: EventSourceLike | null = null;
  private backoffMs = BACKOFF_START_MS;
  private listeners: ((session: ConsoleSession) => void)[] = [];

  constructor(
    readonly api: ApiClient,
    readonly mode: ViewMode,
    options: { staleTimeoutS?: number; nowMs?: () => number } = {},
  ) {
    this.staleTimeoutS = options.staleTimeoutS ?? 6;
    this.commands = new CommandTracker(options.nowMs);
  }

  onChange(listener: (session: ConsoleSession) => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) {
      listener(this);
    }
  }

  async start(): Promise<void> {
    this.topology = await this.api.getTopology();
    await this.refresh();
  }

  /** Pull-path refresh; also the 2 s fallback when the stream is down. */
  async refresh(): Promise<void> {
    this.status = await this.api.getStatus();
    this.store.ingest(await this.api.getTelemetry());
    this.connections = await this.api.getConnections();
    const estimate = await this.api.getEstimate();
    this.estimate = "t_s" in estimate ? (estimate as EstimateInfo) : null;
    if (this.mode === "researcher") {
      const actual = await this.api.getActual();
      this.actual = "revision" in actual ? (actual as ActualInfo) : null;
    }
    this.commands.applyJournal(await this.api.getJournal());
    const events = await this.api.getEvents(this.timeline.lastSeq);
    this.applyEvents(events);
    this.notify();
  }

  applyEvents(events: SimEvent[]): void {
    const added = this.timeline.add(events);
    for (const event of events) {
      this.commands.applyEvent(event);
    }
    if (added > 0) {
      this.notify();
    }
  }

  connectStream(factory: EventSourceFactory): void {
    const source = factory(this.api.streamUrl());
    this.stream = source;
    source.onmessage = (message) => {
      this.streamConnected = true;
      this.backoffMs = BACKOFF_START_MS;
      try {
        this.applyEvents([JSON.parse(message.data) as SimEvent]);
      } catch {
        // keepalives and partial frames are ignored
      }
    };
    source.onerror = () => {
      this.streamConnected = false;
      source.close();
      const delay = this.backoffMs;
      this.backoffMs = Math.min(this.backoffMs * 2, BACKOFF_MAX_MS);
      setTimeout(() => this.connectStream(factory), delay);
    };
  }

  close(): void {
    if (this.stream !== null) {
      this.stream.close();
      this.stream = null;
    }
  }

  nowS(): number {
    return this.status === null ? 0 : this.status.virtual_time_s;
  }

  /** Reported value for a grid element attribute, from the data-point map. */
  reported(element: string, attr: string): number | boolean | undefined {
    if (this.topology === null) {
      return undefined;
    }
    for (const point of this.topology.points) {
      if (point.element === element && point.attr === attr
          && point.direction === "monitoring") {
        const sample = this.store.latest(`${point.coa}:${point.ioa}`);
        if (sample !== undefined) {
          return sample.value;
        }
      }
    }
    return undefined;
  }

  pointIsStale(coa: number, ioa: number): boolean {
    return this.store.isStale(`${coa}:${ioa}`, this.nowS(), this.staleTimeoutS);
  }

  /** Audit helper: true when no ground-truth endpoint was ever consumed. */
  auditOperatorPayloads(): boolean {
    return !this.api.requestedPaths.some((p) => p.startsWith("/api/grid/actual"));
  }
}
