import { describe, expect, it } from "vitest";

import type { SimEvent } from "../src/api.js";
import { TIMELINE_CAP, Timeline, describeEvent } from "../src/timeline.js";

function event(seq: number, kind: string, tS = seq): SimEvent {
  return { t_ns: tS * 1e9, seq, kind };
}

describe("Timeline", () => {
  it("orders chronologically and deduplicates by sequence", () => {
    const timeline = new Timeline();
    timeline.add([event(3, "mtu.conn-up"), event(1, "mtu.conn-up")]);
    timeline.add([event(2, "relay.trip"), event(3, "mtu.conn-up")]);
    expect(timeline.filtered().map((e) => e.seq)).toEqual([1, 2, 3]);
  });

  it("filters by kind and time", () => {
    const timeline = new Timeline();
    timeline.add([
      event(1, "mtu.conn-up", 5),
      event(2, "relay.trip", 10),
      event(3, "mtu.conn-down", 15),
    ]);
    expect(timeline.filtered({ kinds: ["relay.trip"] })).toHaveLength(1);
    expect(timeline.filtered({ sinceS: 9 })).toHaveLength(2);
  });

  it("free-text search matches event fields", () => {
    const timeline = new Timeline();
    timeline.add([
      { ...event(1, "mtu.conn-down"), rtu: "rtu_f5s7" },
      { ...event(2, "mtu.conn-down"), rtu: "rtu_f1s1" },
    ]);
    expect(timeline.filtered({ search: "f5s7" })).toHaveLength(1);
  });

  it("caps retained events", () => {
    const timeline = new Timeline();
    const batch: SimEvent[] = [];
    for (let i = 1; i <= TIMELINE_CAP + 100; i++) {
      batch.push(event(i, "se.result"));
    }
    timeline.add(batch);
    expect(timeline.size()).toBe(TIMELINE_CAP);
    expect(timeline.filtered()[0].seq).toBe(101);
    expect(timeline.lastSeq).toBe(TIMELINE_CAP + 100);
  });

  it("an empty timeline renders nothing and reports seq 0", () => {
    const timeline = new Timeline();
    expect(timeline.filtered()).toEqual([]);
    expect(timeline.lastSeq).toBe(0);
  });

  it("describes events compactly", () => {
    const text = describeEvent({ ...event(9, "relay.trip", 12.5),
                                 breaker: "brk_feeder1" });
    expect(text).toContain("relay.trip");
    expect(text).toContain("12.50");
    expect(text).toContain("brk_feeder1");
  });
});
