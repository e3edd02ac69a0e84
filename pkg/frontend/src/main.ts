// Console bootstrap: wires the session to the DOM.
//
//   http://127.0.0.1:8000/?api=http://127.0.0.1:8123&mode=operator

import { ApiClient } from "./api.js";
import { ConsoleSession, POLL_FALLBACK_MS, ViewMode } from "./session.js";
import {
  renderGridView, renderJournal, renderStatus, renderTimeline,
} from "./render.js";

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

async function boot(): Promise<void> {
  const base = param("api", "http://127.0.0.1:8123");
  const mode = (param("mode", "operator") === "researcher"
    ? "researcher" : "operator") as ViewMode;
  const api = new ApiClient(base);
  const session = new ConsoleSession(api, mode);

  const gridPane = document.getElementById("grid")!;
  const statusPane = document.getElementById("status")!;
  const timelinePane = document.getElementById("timeline")!;
  const journalPane = document.getElementById("journal")!;

  const redraw = () => {
    renderStatus(session, statusPane);
    renderGridView(session, gridPane);
    renderTimeline(session, timelinePane, undefined);
    renderJournal(session, journalPane);
  };
  session.onChange(redraw);

  await session.start();
  session.connectStream((url) => {
    const native = new EventSource(url);
    const adapter = {
      onmessage: null as ((ev: { data: string }) => void) | null,
      onerror: null as ((ev: unknown) => void) | null,
      close: () => native.close(),
    };
    native.onmessage = (ev) => adapter.onmessage?.({ data: ev.data });
    native.onerror = (ev) => adapter.onerror?.(ev);
    return adapter;
  });
  // pull refresh keeps slow-changing panels (telemetry, journal) current
  // and doubles as the fallback while the stream reconnects
  setInterval(() => {
    session.refresh().catch(() => undefined);
  }, POLL_FALLBACK_MS);

  const form = document.getElementById("command-form") as HTMLFormElement;
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const coa = Number((document.getElementById("cmd-coa") as HTMLInputElement).value);
    const ioa = Number((document.getElementById("cmd-ioa") as HTMLInputElement).value);
    const raw = (document.getElementById("cmd-value") as HTMLInputElement).value;
    const value = raw === "true" ? true : raw === "false" ? false : Number(raw);
    session.commands.issue(api, coa, ioa, value)
      .then(redraw)
      .catch(() => undefined);
  });

  redraw();
}

boot().catch((error) => {
  const pane = document.getElementById("status");
  if (pane !== null) {
    pane.textContent = `failed to connect: ${error}`;
  }
});
