/**
 * End-to-end against a live service: real HTTP, real WebSocket, and every
 * action entered through the panel's widgets, never through the client API.
 *
 * The full drill job is driven from a recorded action list. Gesture
 * synthesis must reproduce each action exactly: pixel scales are powers of
 * two, so drag offsets of revolutions*128 or inches*64 divide back without
 * rounding, and input values round-trip through their decimal text.
 */
import { spawn, type ChildProcess } from "node:child_process";
import { readFileSync } from "node:fs";
import { resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WsWebSocket from "ws";

import type { Action, WsLike } from "../src/api.js";
import { TrainerConsole } from "../src/console.js";
import { formatDro } from "../src/viewmodel.js";
import { click, drag, mount, setInput } from "./fakes.js";

const ADDR = "127.0.0.1:18547";
const BASE = `http://${ADDR}`;

const fixture = JSON.parse(
  readFileSync(resolve(process.cwd(), "tests/fixtures/full-run.json"), "utf8"),
) as { scenario_hash: string; actions: Action[] };

let server: ChildProcess;
let serverLog = "";

beforeAll(async () => {
  server = spawn("virtmill", ["serve", "--addr", ADDR], { stdio: ["ignore", "pipe", "pipe"] });
  server.stdout?.on("data", (chunk) => (serverLog += String(chunk)));
  server.stderr?.on("data", (chunk) => (serverLog += String(chunk)));
  const deadline = Date.now() + 20_000;
  for (;;) {
    try {
      await fetch(`${BASE}/sessions/probe/state`);
      return; // any HTTP answer means the service is up
    } catch {
      if (Date.now() > deadline) {
        throw new Error(`service never came up\n${serverLog}`);
      }
      await sleep(100);
    }
  }
});

afterAll(() => {
  server?.kill();
});

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function until(what: string, cond: () => boolean, ms = 15_000): Promise<void> {
  const deadline = Date.now() + ms;
  while (!cond()) {
    if (Date.now() > deadline) {
      throw new Error(`timed out waiting for ${what}`);
    }
    await sleep(25);
  }
}

interface Rig {
  container: HTMLElement;
  trainer: TrainerConsole;
}

async function startConsole(): Promise<Rig> {
  const container = mount();
  const trainer = new TrainerConsole({
    baseUrl: BASE,
    container,
    fetchFn: globalThis.fetch.bind(globalThis),
    wsFactory: (url) => new WsWebSocket(url) as unknown as WsLike,
  });
  await trainer.start();
  return { container, trainer };
}

function q<T extends Element>(rig: Rig, selector: string): T {
  const el = rig.container.querySelector(selector);
  if (el === null) {
    throw new Error(`missing: ${selector}`);
  }
  return el as T;
}

/** Enter one recorded action purely through the widget it belongs to. */
function driveAction(rig: Rig, a: Action): void {
  switch (a.kind) {
    case "resolve_hazard":
      click(q(rig, `[data-hazard='${a.hazard}']`));
      break;
    case "toggle_spindle": {
      // The switch always requests the opposite of the current snapshot
      // state; the recorded run must agree or the drive is out of sync.
      const power = rig.trainer.vm.snapshot?.machine.spindle.power;
      expect(power).toBe(!a.on);
      click(q(rig, "#spindle-switch"));
      break;
    }
    case "set_speed":
      setInput(rig.container, "#speed-dial", String(a.rpm));
      break;
    case "crank_table":
      drag(q(rig, `#wheel-${a.axis}`), (a.revolutions as number) * 128, 0);
      break;
    case "move_quill": {
      const delta = a.delta_z_in as number;
      const feed = (Math.abs(delta) * 60) / (a.duration_s as number);
      setInput(rig.container, "#feed-rate", String(feed));
      drag(q(rig, "#quill-lever"), 0, delta * 64);
      break;
    }
    case "zero_dro":
      setInput(rig.container, "#zero-offset", String(a.offset_in));
      click(q(rig, `#zero-${a.axis}`));
      break;
    case "load_tool":
      click(q(rig, `[data-tool='${a.tool_id}']`));
      break;
    case "mallet_tap":
      setInput(rig.container, "#mallet-force", a.force as string);
      click(q(rig, "#mallet"));
      break;
    case "deburr":
      click(q(rig, `[data-hole='${a.hole_id}']`));
      break;
    default:
      // Plain one-shot buttons are named after their action kind.
      click(q(rig, `#${a.kind.replace(/_/g, "-")}`));
  }
}

function checkDroDigits(rig: Rig): void {
  const snap = rig.trainer.vm.snapshot;
  expect(snap).not.toBeNull();
  for (const axis of ["x", "y"] as const) {
    const text = q(rig, `#dro-${axis}`).textContent as string;
    expect(text).toBe(formatDro((snap as NonNullable<typeof snap>).dro_readings[axis]));
    expect(Number(text)).toBe((snap as NonNullable<typeof snap>).dro_readings[axis]);
  }
}

async function driveAndSettle(rig: Rig, a: Action): Promise<void> {
  const before = rig.trainer.vm.snapshot?.last_seq as number;
  driveAction(rig, a);
  expect(rig.trainer.vm.pending).not.toBeNull();
  await rig.trainer.settled();
  expect(rig.trainer.vm.pending).toBeNull();
  // Every accepted action commits at least one event.
  expect(rig.trainer.vm.snapshot?.last_seq).toBeGreaterThan(before);
}

describe("console against a live service", () => {
  it("completes the whole job through the widgets", async () => {
    const rig = await startConsole();
    expect(rig.trainer.vm.snapshot?.scenario_hash).toBe(fixture.scenario_hash);
    expect(q<HTMLElement>(rig, "#connecting").hidden).toBe(true);

    for (const action of fixture.actions) {
      await driveAndSettle(rig, action);
      checkDroDigits(rig);
      // Nothing in the recorded run halts, so the modal must never show.
      expect(rig.trainer.vm.halted).toBeNull();
      expect(q<HTMLElement>(rig, "#blocked-modal").hidden).toBe(true);
    }

    const vm = rig.trainer.vm;
    const snap = vm.snapshot as NonNullable<typeof vm.snapshot>;
    expect(snap.progress.goal_done).toBe(true);
    expect(snap.status).toBe("completed");
    expect(snap.progress.tasks.every((t) => t.done)).toBe(true);
    expect(vm.warnings).toEqual([]);
    expect(q(rig, "#session-line").textContent).toContain("status completed");

    const marks = Array.from(rig.container.querySelectorAll("#task-list li"));
    expect(marks).toHaveLength(11);
    for (const li of marks) {
      expect(li.textContent).toContain("✓");
    }
    expect(q<HTMLElement>(rig, "#blueprint-part .marker").dataset.status).toBe("pass");

    // The stream must deliver the same history the responses carried.
    await until("stream catch-up", () => vm.lastEventSeq === snap.last_seq);

    const report = await rig.trainer.client.getReport(rig.trainer.sessionId as string);
    expect(report.complete).toBe(true);
    expect(report.error_score).toBe(0);

    rig.trainer.stop();
  });

  it("raises the modal exactly while halted, for both halt paths", async () => {
    const rig = await startConsole();
    const modal = q<HTMLElement>(rig, "#blocked-modal");

    // Safety screen first; the dial refusal needs the operator inside.
    for (const action of fixture.actions.slice(0, 4)) {
      await driveAndSettle(rig, action);
    }

    // Halt path one: a refused command. Dialing a speed with the spindle
    // off is rejected and leaves the session awaiting acknowledgment.
    setInput(rig.container, "#speed-dial", "1200");
    await rig.trainer.settled();
    expect(rig.trainer.vm.halted).toBe("SPEED_BEFORE_ON");
    expect(modal.hidden).toBe(false);
    expect(q(rig, "#blocked-code").textContent).toBe("SPEED_BEFORE_ON");
    expect(q(rig, "#blocked-title").textContent).toBe(
      rig.trainer.vm.scenario?.catalog["SPEED_BEFORE_ON"]?.title,
    );

    // While halted every other command is refused and the modal stays.
    click(q(rig, "#brush-vise"));
    await rig.trainer.settled();
    expect(rig.trainer.vm.halted).toBe("SPEED_BEFORE_ON");
    expect(modal.hidden).toBe(false);
    expect(q(rig, "#notice-list").textContent).toContain("HALTED");

    click(q(rig, "#ack-button"));
    await rig.trainer.settled();
    expect(rig.trainer.vm.halted).toBeNull();
    expect(modal.hidden).toBe(true);
    expect(q<HTMLButtonElement>(rig, "#spindle-switch").disabled).toBe(false);

    // Set up through spindle start, then halt path two: an error emitted
    // mid-cut. An aggressive unpecked plunge overheats the drill.
    for (const action of fixture.actions.slice(4, 37)) {
      await driveAndSettle(rig, action);
      expect(modal.hidden).toBe(true);
    }
    setInput(rig.container, "#speed-dial", "3000");
    await rig.trainer.settled();
    expect(rig.trainer.vm.halted).toBeNull();

    setInput(rig.container, "#feed-rate", "7.5");
    drag(q(rig, "#quill-lever"), 0, 1.9 * 64);
    await rig.trainer.settled();
    expect(rig.trainer.vm.halted).toBe("OVERHEAT");
    expect(modal.hidden).toBe(false);
    expect(q(rig, "#blocked-code").textContent).toBe("OVERHEAT");
    expect(q(rig, "#blocked-title").textContent).toBe(
      rig.trainer.vm.scenario?.catalog["OVERHEAT"]?.title,
    );

    click(q(rig, "#ack-button"));
    await rig.trainer.settled();
    expect(rig.trainer.vm.halted).toBeNull();
    expect(modal.hidden).toBe(true);
    expect(q<HTMLButtonElement>(rig, "#spindle-switch").disabled).toBe(false);

    rig.trainer.stop();
    await rig.trainer.client.abandonSession(rig.trainer.sessionId as string);
  }, 120_000);
});
