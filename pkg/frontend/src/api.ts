/**
 * Wire types and transport for the mill session service.
 *
 * The console is a thin terminal: every number it shows comes out of these
 * documents verbatim. Nothing in here re-derives machine state.
 */

export interface ToolPayload {
  id: string;
  kind: string;
  diameter_in: number;
}

export interface HoleDoc {
  id: string;
  x: number;              // absolute table coordinates
  y: number;
  diameter_in: number;
  depth_in: number;
  overheated: boolean;
  off_speed: boolean;
  no_center_drill: boolean;
}

export interface WorkpieceDoc {
  length_in: number;
  width_in: number;
  height_in: number;
  material: string;
  origin_x: number;
  origin_y: number;
  holes: HoleDoc[];
  spots: { x: number; y: number; depth_in: number }[];
  burrs: string[];
}

export interface MachineDoc {
  spindle: { power: boolean; speed_rpm: number; quill_lock: boolean };
  quill_z_in: number;
  table: { x: number; y: number };
  dro: { x_offset: number; y_offset: number };
  chuck: { installed: boolean; tightened: boolean; held_tool: ToolPayload | null };
  vise: {
    jaw_gap_in: number;
    brushed_clean: boolean;
    parallels_in: boolean;
    part_in: boolean;
    part_seated: boolean;
    tightened: boolean;
  };
  workpiece: WorkpieceDoc;
  operator: { hazards: string[]; in_shop: boolean };
  clock_s: number;
}

export interface TaskRow {
  id: string;
  group: string;
  title: string;
  done: boolean;
}

export interface Snapshot {
  session: string;
  scenario: string;
  scenario_hash: string;
  mode: "free" | "guided";
  status: string;
  halted: string | null;
  clock_s: number;
  machine: MachineDoc;
  heat: { h: number; latched: boolean; depth_since_clear_in: number };
  dro_readings: { x: number; y: number };
  sound: { mode: string; pitch: number };
  progress: {
    completed: string[];
    completed_order: string[];
    goal_done: boolean;
    current_guided: string | null;
    tasks: TaskRow[];
  };
  last_seq: number;
  digest: string;
}

export interface EventDoc {
  seq: number;
  t: number;
  kind: string;
  code: string;
  payload: Record<string, unknown>;
  weight?: number | null;
  digest?: string;
}

export type Decision = "allowed" | "warn" | "blocked";

export interface SubmitResponse {
  verdict: { decision: Decision; code: string | null };
  events: EventDoc[];
  snapshot: Snapshot;
}

export interface BlueprintHoleDoc {
  x: number;               // part coordinates, origin at the front-left corner
  y: number;
  diameter_in: number;
  depth_in: number;
}

export interface ScenarioDoc {
  id: string;
  title: string;
  blueprint: {
    holes: BlueprintHoleDoc[];
    position_tol_in: number;
    diameter_tol_in: number;
    depth_tol_in: number;
    disqualifying_flags: string[];
  };
  tools: { id: string; kind: string; diameter_in: number }[];
  catalog: Record<string, { weight: number; title: string }>;
  workpiece: { length_in: number; width_in: number; height_in: number };
  [key: string]: unknown;
}

export interface Action {
  kind: string;
  on?: boolean;
  rpm?: number;
  axis?: "x" | "y";
  revolutions?: number;
  delta_z_in?: number;
  duration_s?: number;
  tool_id?: string;
  force?: "light" | "firm";
  offset_in?: number;
  hole_id?: string;
  hazard?: string;
  code?: string;
}

/** Service said no: carries the structured error body. */
export class ApiError extends Error {
  readonly code: string;
  readonly path: string;
  readonly status: number;

  constructor(status: number, code: string, message: string, path: string) {
    super(message);
    this.status = status;
    this.code = code;
    this.path = path;
  }
}

/** Request never produced an HTTP response (network, refused connection). */
export class TransportError extends Error {}

/** The slice of the WebSocket surface the console needs; lets tests inject fakes. */
export interface WsLike {
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev: unknown) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  close(): void;
}

export interface EventStreamHandlers {
  onEvent(doc: EventDoc): void;
  onClose?(): void;
}

export interface ClientOptions {
  baseUrl: string;
  fetchFn?: typeof fetch;
  wsFactory?: (url: string) => WsLike;
}

export class SessionClient {
  private readonly baseUrl: string;
  private readonly fetchFn: typeof fetch;
  private readonly wsFactory: (url: string) => WsLike;

  constructor(options: ClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, "");
    this.fetchFn = options.fetchFn ?? globalThis.fetch.bind(globalThis);
    this.wsFactory = options.wsFactory ?? ((url) => new WebSocket(url) as unknown as WsLike);
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.baseUrl + path, {
        method,
        headers: body === undefined ? undefined : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new TransportError(String(err));
    }
    const doc: unknown = await resp.json();
    if (!resp.ok) {
      const e = (doc as { error?: { code?: string; message?: string; path?: string } }).error;
      throw new ApiError(resp.status, e?.code ?? "UNKNOWN", e?.message ?? "request failed", e?.path ?? "");
    }
    return doc;
  }

  async createSession(mode: "free" | "guided" = "free"): Promise<{ session: string; snapshot: Snapshot }> {
    return (await this.request("POST", "/sessions", { mode })) as { session: string; snapshot: Snapshot };
  }

  async submit(sessionId: string, action: Action, idempotencyKey: string): Promise<SubmitResponse> {
    return (await this.request("POST", `/sessions/${sessionId}/actions`, {
      action,
      idempotency_key: idempotencyKey,
    })) as SubmitResponse;
  }

  async getState(sessionId: string): Promise<Snapshot> {
    return (await this.request("GET", `/sessions/${sessionId}/state`)) as Snapshot;
  }

  async getReport(sessionId: string): Promise<Record<string, unknown>> {
    return (await this.request("GET", `/sessions/${sessionId}/report`)) as Record<string, unknown>;
  }

  async getScenario(sessionId: string): Promise<ScenarioDoc> {
    return (await this.request("GET", `/sessions/${sessionId}/scenario`)) as ScenarioDoc;
  }

  async abandonSession(sessionId: string): Promise<{ session: string; status: string }> {
    return (await this.request("DELETE", `/sessions/${sessionId}`)) as { session: string; status: string };
  }

  eventsUrl(sessionId: string, fromSeq: number): string {
    const ws = this.baseUrl.replace(/^http/, "ws");
    return `${ws}/sessions/${sessionId}/events?from=${fromSeq}`;
  }

  /** Open the live event stream. Returns a closer. */
  openEvents(sessionId: string, fromSeq: number, handlers: EventStreamHandlers): () => void {
    const sock = this.wsFactory(this.eventsUrl(sessionId, fromSeq));
    sock.onmessage = (ev) => {
      let doc: unknown;
      try {
        doc = JSON.parse(String(ev.data));
      } catch {
        return;
      }
      // The stream sends one structured error document before closing an
      // unusable subscription; anything without a seq is not an event.
      if (doc !== null && typeof doc === "object" && typeof (doc as EventDoc).seq === "number") {
        handlers.onEvent(doc as EventDoc);
      }
    };
    sock.onclose = () => handlers.onClose?.();
    sock.onerror = () => undefined;
    return () => {
      sock.onmessage = null;
      sock.onclose = null;
      sock.close();
    };
  }
}
