// Command issue and live journal status tracking.

import type { ApiClient, JournalEntry, SimEvent } from "./api.js";

export type CommandStatus =
  | "queued" | "sent" | "confirmed" | "terminated" | "unconfirmed" | "failed";

export interface TrackedCommand {
  commandId: number | null;
  coa: number;
  ioa: number;
  value: number | boolean;
  status: CommandStatus;
  issuedAtMs: number;
  note?: string;
}

export class CommandTracker {
  readonly commands: TrackedCommand[] = [];

  constructor(private readonly nowMs: () => number = () => Date.now()) {}

  async issue(api: ApiClient, coa: number, ioa: number,
              value: number | boolean): Promise<TrackedCommand> {
    const tracked: TrackedCommand = {
      commandId: null, coa, ioa, value,
      status: "queued", issuedAtMs: this.nowMs(),
    };
    this.commands.push(tracked);
    const response = await api.sendCommand(coa, ioa, value);
    if (!response.accepted) {
      tracked.status = "failed";
      tracked.note = response.error;
    } else if (response.command_id != null) {
      tracked.commandId = response.command_id;
      tracked.status = "sent";
    }
    return tracked;
  }

  /** Reconcile with the journal served by the MTU. */
  applyJournal(journal: JournalEntry[]): void {
    for (const entry of journal) {
      const match = this.commands.find(
        (c) => c.commandId === entry.command_id);
      if (match !== undefined) {
        match.status = entry.status as CommandStatus;
      }
    }
  }

  /** Push-path updates from mtu.command-status events. */
  applyEvent(event: SimEvent): void {
    if (event.kind !== "mtu.command-status") {
      return;
    }
    const match = this.commands.find(
      (c) => c.commandId === (event.command_id as number));
    if (match !== undefined) {
      match.status = event.status as CommandStatus;
    }
  }

  pending(): TrackedCommand[] {
    return this.commands.filter(
      (c) => c.status === "queued" || c.status === "sent"
        || c.status === "confirmed");
  }

  /** Confirmed commands whose realization never arrived: the journal says
   * confirmed/terminated but the breaker or setpoint did not move. The
   * mismatch itself is detected by comparing against telemetry. */
  confirmedButStale(isRealized: (c: TrackedCommand) => boolean): TrackedCommand[] {
    return this.commands.filter(
      (c) => (c.status === "confirmed" || c.status === "terminated")
        && !isRealized(c));
  }
}
