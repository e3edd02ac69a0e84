// Scrolling annotated event log with kind filters.

import type { SimEvent } from "./api.js";

export const TIMELINE_CAP = 2000;

/** Event kinds rendered for an operator (operational view, no ground truth). */
export const OPERATOR_KINDS = [
  "mtu.conn-up", "mtu.conn-down", "mtu.command", "mtu.command-status",
  "mtu.unexpected-confirmation", "relay.trip", "se.result", "grid.solve-failed",
];

export interface TimelineFilter {
  kinds?: string[];
  search?: string;
  sinceS?: number;
}

export class Timeline {
  private events: SimEvent[] = [];
  private seen = new Set<number>();

  add(events: SimEvent[]): number {
    let added = 0;
    for (const event of events) {
      if (this.seen.has(event.seq)) {
        continue;
      }
      this.seen.add(event.seq);
      this.events.push(event);
      added += 1;
    }
    if (added > 0) {
      this.events.sort((a, b) => a.seq - b.seq);
      if (this.events.length > TIMELINE_CAP) {
        const dropped = this.events.splice(0, this.events.length - TIMELINE_CAP);
        for (const event of dropped) {
          this.seen.delete(event.seq);
        }
      }
    }
    return added;
  }

  get lastSeq(): number {
    return this.events.length === 0 ? 0 : this.events[this.events.length - 1].seq;
  }

  filtered(filter: TimelineFilter = {}): SimEvent[] {
    return this.events.filter((event) => {
      if (filter.kinds !== undefined && !filter.kinds.includes(event.kind)) {
        return false;
      }
      if (filter.sinceS !== undefined && event.t_ns / 1e9 < filter.sinceS) {
        return false;
      }
      if (filter.search !== undefined && filter.search !== "") {
        const haystack = JSON.stringify(event).toLowerCase();
        if (!haystack.includes(filter.search.toLowerCase())) {
          return false;
        }
      }
      return true;
    });
  }

  size(): number {
    return this.events.length;
  }
}

export function describeEvent(event: SimEvent): string {
  const t = (event.t_ns / 1e9).toFixed(2).padStart(8);
  const rest = Object.entries(event)
    .filter(([k]) => !["t_ns", "seq", "kind"].includes(k))
    .map(([k, v]) => `${k}=${JSON.stringify(v)}`)
    .join(" ");
  return `${t}s  ${event.kind}  ${rest}`;
}
