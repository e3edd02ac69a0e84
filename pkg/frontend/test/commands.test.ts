import { describe, expect, it } from "vitest";

import { ApiClient, FetchLike } from "../src/api.js";
import { CommandTracker } from "../src/commands.js";

function commandBackend(response: unknown): { api: ApiClient; bodies: string[] } {
  const bodies: string[] = [];
  const fetchImpl: FetchLike = async (url, init) => {
    bodies.push(String(init?.body ?? ""));
    return new Response(JSON.stringify(response), { status: 200 });
  };
  return { api: new ApiClient("http://x", fetchImpl), bodies };
}

describe("CommandTracker", () => {
  it("tracks queued -> sent -> confirmed -> terminated", async () => {
    const { api, bodies } = commandBackend({ accepted: true, command_id: 7 });
    const tracker = new CommandTracker(() => 1000);
    const cmd = await tracker.issue(api, 1001, 31, true);
    expect(bodies[0]).toContain('"coa":1001');
    expect(cmd.status).toBe("sent");
    tracker.applyEvent({ t_ns: 0, seq: 1, kind: "mtu.command-status",
                         command_id: 7, status: "confirmed" });
    expect(cmd.status).toBe("confirmed");
    tracker.applyJournal([{ command_id: 7, issued_s: 1, coa: 1001, ioa: 31,
                            value: true, status: "terminated",
                            confirmed_s: 1.2, terminated_s: 1.4 }]);
    expect(cmd.status).toBe("terminated");
  });

  it("surfaces unconfirmed commands from the journal", async () => {
    const { api } = commandBackend({ accepted: true, command_id: 3 });
    const tracker = new CommandTracker();
    const cmd = await tracker.issue(api, 512, 10, 0.5);
    tracker.applyJournal([{ command_id: 3, issued_s: 1, coa: 512, ioa: 10,
                            value: 0.5, status: "unconfirmed",
                            confirmed_s: null, terminated_s: null }]);
    expect(cmd.status).toBe("unconfirmed");
    expect(tracker.pending()).toHaveLength(0);
  });

  it("rejected commands fail locally", async () => {
    const { api } = commandBackend({ accepted: false, error: "no MTU" });
    const tracker = new CommandTracker();
    const cmd = await tracker.issue(api, 1, 1, 1);
    expect(cmd.status).toBe("failed");
    expect(cmd.note).toBe("no MTU");
  });

  it("detects confirmed-but-unrealized commands", async () => {
    const { api } = commandBackend({ accepted: true, command_id: 9 });
    const tracker = new CommandTracker();
    const cmd = await tracker.issue(api, 512, 10, 0.5);
    tracker.applyEvent({ t_ns: 0, seq: 2, kind: "mtu.command-status",
                         command_id: 9, status: "terminated" });
    // telemetry still shows the old value: realization never happened
    const mismatches = tracker.confirmedButStale(() => false);
    expect(mismatches).toEqual([cmd]);
    expect(tracker.confirmedButStale(() => true)).toEqual([]);
  });
});
