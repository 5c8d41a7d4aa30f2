/**
 * Shared test doubles: a scripted fake of the session service, a manual
 * WebSocket, document fixtures, and gesture helpers for driving widgets.
 */
import type { EventDoc, ScenarioDoc, Snapshot, WsLike } from "../src/api.js";

export function freshSnapshot(): Snapshot {
  return {
    session: "s-test",
    scenario: "single_hole_plate",
    scenario_hash: "a206c346036389c9",
    mode: "free",
    status: "active",
    halted: null,
    clock_s: 0.0,
    machine: {
      spindle: { power: false, speed_rpm: 0, quill_lock: false },
      quill_z_in: 0.0,
      table: { x: 13.0, y: 6.0 },
      dro: { x_offset: 0.0, y_offset: 0.0 },
      chuck: { installed: false, tightened: false, held_tool: null },
      vise: {
        jaw_gap_in: 4.5,
        brushed_clean: false,
        parallels_in: false,
        part_in: false,
        part_seated: false,
        tightened: false,
      },
      workpiece: {
        length_in: 6.0,
        width_in: 4.0,
        height_in: 1.0,
        material: "6061_aluminum",
        origin_x: 10.0,
        origin_y: 4.0,
        holes: [],
        spots: [],
        burrs: [],
      },
      operator: { hazards: ["loose_hair", "no_goggles", "ring"], in_shop: false },
      clock_s: 0.0,
    },
    heat: { h: 0.0, latched: false, depth_since_clear_in: 0.0 },
    dro_readings: { x: 13.0, y: 6.0 },
    sound: { mode: "idle", pitch: 0.0 },
    progress: {
      completed: [],
      completed_order: [],
      goal_done: false,
      current_guided: null,
      tasks: [
        { id: "safety_prep", group: "safety", title: "Clear personal hazards and enter the shop", done: false },
        { id: "vise_setup", group: "workhold_vise", title: "Clamp the part on parallels", done: false },
        { id: "chuck_setup", group: "workhold_chuck", title: "Install the drill chuck and secure a tool", done: false },
        { id: "edge_find_x", group: "edge_finding", title: "Zero the X axis at the part edge", done: false },
        { id: "edge_find_y", group: "edge_finding", title: "Zero the Y axis at the part edge", done: false },
        { id: "spot_hole", group: "center_drilling", title: "Spot the hole location with a center drill", done: false },
        { id: "spindle_on", group: "drilling", title: "Start the spindle with the drill secured", done: false },
        { id: "set_speed", group: "drilling", title: "Set the drilling speed", done: false },
        { id: "quill_drill", group: "drilling", title: "Drill the hole to depth", done: false },
        { id: "spindle_off", group: "drilling", title: "Stop the spindle after drilling", done: false },
        { id: "deburr_hole", group: "deburring", title: "Deburr the finished hole", done: false },
      ],
    },
    last_seq: 0,
    digest: "0000000000000000",
  };
}

export function fakeScenario(): ScenarioDoc {
  return {
    id: "single_hole_plate",
    title: "Drill one quarter inch hole on location",
    blueprint: {
      holes: [{ x: 2.0, y: 1.5, diameter_in: 0.25, depth_in: 1.1 }],
      position_tol_in: 0.01,
      diameter_tol_in: 0.005,
      depth_tol_in: 0.02,
      disqualifying_flags: ["overheated"],
    },
    tools: [
      { id: "edge_finder_100", kind: "edge_finder", diameter_in: 0.2 },
      { id: "center_drill_3", kind: "center_drill", diameter_in: 0.1875 },
      { id: "twist_025", kind: "twist_drill", diameter_in: 0.25 },
      { id: "twist_050", kind: "twist_drill", diameter_in: 0.5 },
    ],
    catalog: {
      OVERHEAT: { weight: 3, title: "Drill overheated in the cut" },
      SPEED_BEFORE_ON: { weight: 1, title: "Speed set before the spindle was on" },
      OUT_OF_ORDER: { weight: 1, title: "Step attempted out of order" },
    },
    workpiece: { length_in: 6.0, width_in: 4.0, height_in: 1.0 },
  };
}

export function doneHole(overrides: Partial<Snapshot["machine"]["workpiece"]["holes"][0]> = {}) {
  return {
    id: "hole_1",
    x: 12.0,
    y: 5.5,
    diameter_in: 0.25,
    depth_in: 1.1,
    overheated: false,
    off_speed: false,
    no_center_drill: false,
    ...overrides,
  };
}

export function warningEvent(seq: number, code = "DIRTY_VISE", t = 1.0): EventDoc {
  return { seq, t, kind: "warning", code, payload: { action: "place_part" }, weight: 2 };
}

export function stateChangeEvent(seq: number, code = "enter_shop", t = 1.0): EventDoc {
  return { seq, t, kind: "state_change", code, payload: { action: code } };
}

// -- scripted HTTP ----------------------------------------------------------

export interface RecordedRequest {
  method: string;
  path: string;
  body: Record<string, unknown> | undefined;
}

type Responder = (req: RecordedRequest) => { status: number; doc: unknown };

export class FakeService {
  requests: RecordedRequest[] = [];
  private plans: Responder[] = [];

  plan(responder: Responder): void {
    this.plans.push(responder);
  }

  planDoc(doc: unknown, status = 200): void {
    this.plan(() => ({ status, doc }));
  }

  planError(status: number, code: string, message = "nope", path = ""): void {
    this.planDoc({ error: { code, message, path } }, status);
  }

  /** Next request rejects at the transport level, as if the wire dropped. */
  planNetworkFailure(): void {
    this.plan(() => {
      throw new Error("connection reset");
    });
  }

  readonly fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = new URL(String(input));
    const req: RecordedRequest = {
      method: init?.method ?? "GET",
      path: url.pathname + url.search,
      body: init?.body === undefined ? undefined : JSON.parse(String(init.body)),
    };
    this.requests.push(req);
    const responder = this.plans.shift();
    if (responder === undefined) {
      throw new Error(`unplanned request: ${req.method} ${req.path}`);
    }
    const { status, doc } = responder(req);
    return {
      ok: status < 400,
      status,
      json: async () => doc,
    } as Response;
  }) as unknown as typeof fetch;
}

export class FakeSocket implements WsLike {
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev: unknown) => void) | null = null;
  onerror: ((ev: unknown) => void) | null = null;
  closed = false;

  constructor(readonly url: string) {}

  close(): void {
    this.closed = true;
  }

  emit(doc: unknown): void {
    this.onmessage?.({ data: JSON.stringify(doc) });
  }
}

export class FakeSocketFactory {
  sockets: FakeSocket[] = [];

  readonly wsFactory = (url: string): WsLike => {
    const sock = new FakeSocket(url);
    this.sockets.push(sock);
    return sock;
  };
}

// -- gestures ---------------------------------------------------------------

export function click(el: Element | null): void {
  if (el === null) {
    throw new Error("click target missing");
  }
  el.dispatchEvent(new MouseEvent("click", { bubbles: true }));
}

export function setInput(root: ParentNode, selector: string, value: string): void {
  const el = root.querySelector(selector) as HTMLInputElement | HTMLSelectElement | null;
  if (el === null) {
    throw new Error(`input missing: ${selector}`);
  }
  el.value = value;
  el.dispatchEvent(new Event("change", { bubbles: true }));
}

/** Press on the widget, move by (dx, dy), release. One gesture. */
export function drag(el: Element | null, dx: number, dy: number): void {
  if (el === null) {
    throw new Error("drag target missing");
  }
  const doc = el.ownerDocument as Document;
  el.dispatchEvent(new MouseEvent("mousedown", { bubbles: true, clientX: 0, clientY: 0 }));
  doc.dispatchEvent(new MouseEvent("mousemove", { clientX: dx / 2, clientY: dy / 2 }));
  doc.dispatchEvent(new MouseEvent("mousemove", { clientX: dx, clientY: dy }));
  doc.dispatchEvent(new MouseEvent("mouseup", {}));
}

export function mount(): HTMLElement {
  const container = document.createElement("div");
  document.body.appendChild(container);
  return container;
}
