// SVG rendering of the single-line diagram plus the side panels.
// Thin DOM layer over the pure session/layout/store modules.

import type { Topology } from "./api.js";
import { layoutDiagram } from "./layout.js";
import type { ConsoleSession } from "./session.js";
import { OPERATOR_KINDS, describeEvent } from "./timeline.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function el<K extends keyof SVGElementTagNameMap>(
  tag: K, attrs: Record<string, string>): SVGElementTagNameMap[K] {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  return node;
}

export function renderGridView(session: ConsoleSession,
                               container: HTMLElement): void {
  const topology = session.topology;
  if (topology === null) {
    return;
  }
  const layout = layoutDiagram(topology);
  container.innerHTML = "";
  const svg = el("svg", {
    viewBox: `0 0 ${layout.width} ${layout.height}`,
    width: "100%",
  });
  svg.classList.add("diagram");

  for (const branch of topology.branches) {
    const a = layout.buses[branch.from];
    const b = layout.buses[branch.to];
    if (a === undefined || b === undefined) {
      continue;
    }
    const line = el("line", {
      x1: String(a.x), y1: String(a.y), x2: String(b.x), y2: String(b.y),
      class: branch.kind === "transformer" ? "branch transformer" : "branch",
    });
    svg.appendChild(line);
    const breaker = breakerOn(topology, branch.id);
    if (breaker !== null) {
      const closed = reportedSwitch(session, breaker);
      const box = el("rect", {
        x: String((a.x + b.x) / 2 - 5), y: String((a.y + b.y) / 2 - 5),
        width: "10", height: "10",
        class: closed === false ? "breaker open" : "breaker",
      });
      box.appendChild(title(`${breaker}: ${closed === undefined
        ? "position unknown" : closed ? "closed" : "open"}`));
      svg.appendChild(box);
    }
  }

  for (const bus of topology.buses) {
    const p = layout.buses[bus.id];
    if (p === undefined) {
      continue;
    }
    const vm = session.reported(bus.id, "vm_pu");
    const stale = vmPointStale(session, topology, bus.id);
    const group = el("g", { class: stale ? "bus stale" : "bus" });
    group.appendChild(el("circle", {
      cx: String(p.x), cy: String(p.y), r: "6",
    }));
    const label = el("text", {
      x: String(p.x + 9), y: String(p.y + 4), class: "bus-label",
    });
    let text = bus.id;
    if (typeof vm === "number") {
      text += ` ${vm.toFixed(3)}`;
    }
    if (session.mode === "researcher") {
      const actual = session.actual?.vm_pu?.[bus.id];
      const estimated = session.estimate?.vm_pu?.[bus.id];
      if (actual !== undefined) {
        text += ` | act ${actual.toFixed(3)}`;
      }
      if (estimated !== undefined) {
        text += ` | se ${estimated.toFixed(3)}`;
      }
    }
    label.textContent = text;
    group.appendChild(label);
    group.appendChild(title(stale ? `${bus.id}: STALE telemetry` : bus.id));
    svg.appendChild(group);
  }
  container.appendChild(svg);
}

function title(text: string): SVGTitleElement {
  const node = document.createElementNS(SVG_NS, "title");
  node.textContent = text;
  return node;
}

function breakerOn(topology: Topology, branchId: string): string | null {
  for (const sw of topology.switches) {
    if (sw.element === branchId) {
      return sw.id;
    }
  }
  return null;
}

function reportedSwitch(session: ConsoleSession,
                        switchId: string): boolean | undefined {
  const value = session.reported(switchId, "closed");
  return typeof value === "boolean" ? value : undefined;
}

function vmPointStale(session: ConsoleSession, topology: Topology,
                      busId: string): boolean {
  for (const point of topology.points) {
    if (point.element === busId && point.attr === "vm_pu"
        && point.direction === "monitoring") {
      return session.pointIsStale(point.coa, point.ioa);
    }
  }
  return false;
}

export function renderStatus(session: ConsoleSession,
                             container: HTMLElement): void {
  const status = session.status;
  const states = Object.values(session.connections);
  const up = states.filter((s) => s === "up").length;
  container.textContent = status === null ? "connecting…" :
    `${status.scenario}  t=${status.virtual_time_s.toFixed(1)}s  ` +
    `mode=${session.mode}  rtus ${up}/${states.length} up  ` +
    `stream=${session.streamConnected ? "live" : "polling"}`;
}

export function renderTimeline(session: ConsoleSession,
                               container: HTMLElement,
                               filterKinds: string[] | undefined): void {
  const kinds = session.mode === "operator"
    ? (filterKinds ?? OPERATOR_KINDS)
    : filterKinds;
  const events = session.timeline.filtered({ kinds }).slice(-40).reverse();
  container.innerHTML = "";
  for (const event of events) {
    const row = document.createElement("div");
    row.className = "event-row";
    row.textContent = describeEvent(event);
    container.appendChild(row);
  }
}

export function renderJournal(session: ConsoleSession,
                              container: HTMLElement): void {
  container.innerHTML = "";
  for (const command of [...session.commands.commands].reverse().slice(0, 20)) {
    const row = document.createElement("div");
    row.className = `journal-row status-${command.status}`;
    row.textContent =
      `#${command.commandId ?? "?"} coa=${command.coa} ioa=${command.ioa} ` +
      `value=${command.value} — ${command.status}`;
    container.appendChild(row);
  }
}
