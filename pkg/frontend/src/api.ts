// Typed client for the simulation service API (REST + SSE).

export interface StatusInfo {
  scenario: string;
  seed: number;
  clock: string;
  virtual_time_s: number;
  running: boolean;
}

export interface TopologyBus { id: string; vn_kv: number }
export interface TopologyBranch { id: string; from: string; to: string; kind: string }
export interface TopologyInjection { id: string; bus: string; kind: string }
export interface TopologySwitch { id: string; element: string | string[] }
export interface TopologyPoint {
  coa: number; ioa: number; direction: string;
  element: string; attr: string; type_id: number;
}

export interface Topology {
  buses: TopologyBus[];
  branches: TopologyBranch[];
  injections: TopologyInjection[];
  switches: TopologySwitch[];
  rtus: { host: string; coa: number }[];
  points: TopologyPoint[];
}

export interface TelemetryEntry { value: number | boolean; t_s: number; count: number }
export type TelemetryMap = Record<string, TelemetryEntry>;

export interface JournalEntry {
  command_id: number;
  issued_s: number;
  coa: number;
  ioa: number;
  value: number | boolean;
  status: string;
  confirmed_s: number | null;
  terminated_s: number | null;
}

export interface EstimateInfo {
  t_s: number;
  observable: boolean;
  vm_pu: Record<string, number>;
  va_deg: Record<string, number>;
}

export interface ActualInfo {
  label: string;
  revision: number;
  vm_pu: Record<string, number>;
  p_mw: Record<string, number>;
  i_ka: Record<string, number>;
  switches: Record<string, boolean>;
}

export interface SimEvent {
  t_ns: number;
  seq: number;
  kind: string;
  [key: string]: unknown;
}

export interface CommandResponse {
  accepted: boolean;
  command_id?: number | null;
  error?: string;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  /** Every path this client has requested; the operator-mode audit reads it. */
  readonly requestedPaths: string[] = [];

  constructor(
    readonly base: string,
    private readonly fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async get<T>(path: string): Promise<T> {
    this.requestedPaths.push(path);
    const response = await this.fetchImpl(this.base + path);
    if (!response.ok) {
      throw new Error(`${path}: HTTP ${response.status}`);
    }
    return (await response.json()) as T;
  }

  getStatus(): Promise<StatusInfo> { return this.get("/api/status"); }
  getTopology(): Promise<Topology> { return this.get("/api/topology"); }
  getTelemetry(): Promise<TelemetryMap> { return this.get("/api/telemetry"); }
  getConnections(): Promise<Record<string, string>> { return this.get("/api/connections"); }
  getJournal(): Promise<JournalEntry[]> { return this.get("/api/journal"); }
  getEstimate(): Promise<EstimateInfo | Record<string, never>> { return this.get("/api/estimate"); }
  getActual(): Promise<ActualInfo | Record<string, never>> { return this.get("/api/grid/actual"); }
  getEvents(since: number): Promise<SimEvent[]> { return this.get(`/api/events?since=${since}`); }

  async sendCommand(coa: number, ioa: number, value: number | boolean): Promise<CommandResponse> {
    this.requestedPaths.push("/api/command");
    const response = await this.fetchImpl(this.base + "/api/command", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ coa, ioa, value }),
    });
    return (await response.json()) as CommandResponse;
  }

  streamUrl(): string {
    return this.base + "/api/events/stream";
  }
}
