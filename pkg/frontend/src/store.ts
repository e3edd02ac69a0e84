// Telemetry store: latest value plus a bounded history per data point.

export interface Sample {
  tS: number;
  value: number | boolean;
}

export const HISTORY_CAP_S = 600; // panels keep at most 10 minutes

export class TelemetryStore {
  private readonly points = new Map<string, Sample[]>();

  update(key: string, sample: Sample): void {
    let history = this.points.get(key);
    if (history === undefined) {
      history = [];
      this.points.set(key, history);
    }
    const last = history[history.length - 1];
    if (last !== undefined && sample.tS < last.tS) {
      return; // stale duplicate, timestamps are monotone per point
    }
    if (last === undefined || sample.tS > last.tS || sample.value !== last.value) {
      history.push(sample);
    }
    const horizon = sample.tS - HISTORY_CAP_S;
    while (history.length > 1 && history[0].tS < horizon) {
      history.shift();
    }
  }

  ingest(telemetry: Record<string, { value: number | boolean; t_s: number }>): void {
    for (const [key, entry] of Object.entries(telemetry)) {
      this.update(key, { tS: entry.t_s, value: entry.value });
    }
  }

  latest(key: string): Sample | undefined {
    const history = this.points.get(key);
    return history === undefined ? undefined : history[history.length - 1];
  }

  history(key: string): readonly Sample[] {
    return this.points.get(key) ?? [];
  }

  keys(): string[] {
    return [...this.points.keys()];
  }

  /** Points whose last update is older than the staleness timeout. */
  staleKeys(nowS: number, timeoutS: number): string[] {
    const out: string[] = [];
    for (const [key, history] of this.points) {
      const last = history[history.length - 1];
      if (last !== undefined && nowS - last.tS > timeoutS) {
        out.push(key);
      }
    }
    return out;
  }

  isStale(key: string, nowS: number, timeoutS: number): boolean {
    const last = this.latest(key);
    return last === undefined || nowS - last.tS > timeoutS;
  }
}

export function pointKey(coa: number, ioa: number): string {
  return `${coa}:${ioa}`;
}
