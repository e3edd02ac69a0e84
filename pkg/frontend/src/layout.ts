// Single-line-diagram geometry: a feeder-tree layout computed from the
// grid topology alone (pure, DOM-free, unit-testable).

import type { Topology } from "./api.js";

export interface BusPosition { x: number; y: number }

export interface DiagramLayout {
  buses: Record<string, BusPosition>;
  width: number;
  height: number;
}

export const COLUMN_GAP = 130;
export const ROW_GAP = 46;
export const MARGIN = 60;

/**
 * Breadth-first tree layout: root buses (external-grid attachment) on the
 * top row, each feeder gets a column, depth grows downward. Meshes fall
 * back to first-visit placement, which keeps every bus visible.
 */
export function layoutDiagram(topology: Topology): DiagramLayout {
  const adjacency = new Map<string, string[]>();
  for (const bus of topology.buses) {
    adjacency.set(bus.id, []);
  }
  for (const branch of topology.branches) {
    adjacency.get(branch.from)?.push(branch.to);
    adjacency.get(branch.to)?.push(branch.from);
  }
  const roots = topology.injections
    .filter((i) => i.kind === "ext_grid")
    .map((i) => i.bus)
    .filter((bus, index, all) => all.indexOf(bus) === index);
  if (roots.length === 0 && topology.buses.length > 0) {
    roots.push(topology.buses[0].id);
  }

  const positions: Record<string, BusPosition> = {};
  const visited = new Set<string>();
  let nextColumn = 0;

  const place = (bus: string, column: number, depth: number): void => {
    positions[bus] = {
      x: MARGIN + column * COLUMN_GAP,
      y: MARGIN + depth * ROW_GAP,
    };
  };

  for (const root of roots) {
    if (visited.has(root)) {
      continue;
    }
    visited.add(root);
    place(root, nextColumn, 0);
    // each neighbor subtree of the root becomes its own column
    const children = (adjacency.get(root) ?? []).filter((n) => !visited.has(n));
    if (children.length === 0) {
      nextColumn += 1;
      continue;
    }
    for (const child of children) {
      if (visited.has(child)) {
        continue;
      }
      let column = nextColumn;
      nextColumn += 1;
      // walk down the feeder
      const queue: { bus: string; depth: number }[] = [
        { bus: child, depth: 1 },
      ];
      visited.add(child);
      place(child, column, 1);
      while (queue.length > 0) {
        const { bus, depth } = queue.shift()!;
        const next = (adjacency.get(bus) ?? []).filter((n) => !visited.has(n));
        let lane = 0;
        for (const neighbor of next) {
          visited.add(neighbor);
          if (lane > 0) {
            column = nextColumn;
            nextColumn += 1;
          }
          place(neighbor, column, depth + 1);
          queue.push({ bus: neighbor, depth: depth + 1 });
          lane += 1;
        }
      }
    }
  }
  // disconnected leftovers still get drawn
  for (const bus of topology.buses) {
    if (!visited.has(bus.id)) {
      place(bus.id, nextColumn, 0);
      nextColumn += 1;
      visited.add(bus.id);
    }
  }

  let width = 2 * MARGIN;
  let height = 2 * MARGIN;
  for (const p of Object.values(positions)) {
    width = Math.max(width, p.x + MARGIN);
    height = Math.max(height, p.y + MARGIN);
  }
  return { buses: positions, width, height };
}
