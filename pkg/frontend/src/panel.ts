/**
 * Trainee console panel: builds the DOM skeleton once, then projects the
 * view model onto it. Widgets translate pointer gestures into actions via
 * the control bindings and hand them to the owner through callbacks.
 *
 * The panel renders numbers exactly as they appear in the snapshot. It
 * holds no machine state of its own, so re-rendering at any cadence
 * produces the same markup for the same view model.
 */
import type { Action } from "./api.js";
import {
  handwheelDrag,
  malletClick,
  quillLeverDrag,
  quillLockClick,
  speedDialChange,
  spindleSwitchClick,
  zeroDroClick,
} from "./bindings.js";
import { soundGlyph, ToneSource } from "./sound.js";
import { formatDro, ViewModel } from "./viewmodel.js";

export interface PanelCallbacks {
  onAction(action: Action): void;
  onAcknowledge(): void;
  onRetry(): void;
}

// Which panel section the guided whiteboard points at for each task.
const GUIDED_SECTIONS: Record<string, string> = {
  safety_prep: "safety-screen",
  vise_setup: "vise-panel",
  chuck_setup: "tool-board",
  edge_find_x: "table-group",
  edge_find_y: "table-group",
  spot_hole: "quill-group",
  spindle_on: "spindle-group",
  set_speed: "spindle-group",
  quill_drill: "quill-group",
  spindle_off: "spindle-group",
  deburr_hole: "finishing",
};

const HAZARD_LABELS: Record<string, string> = {
  no_goggles: "goggles",
  loose_hair: "hair",
  ring: "ring",
};

const WARNING_DISPLAY_LIMIT = 8;

interface DragTrack {
  widget: string;
  startX: number;
  startY: number;
  lastX: number;
  lastY: number;
}

export class ConsolePanel {
  private readonly root: HTMLElement;
  private readonly callbacks: PanelCallbacks;
  private readonly tone: ToneSource;
  private vm: ViewModel | null = null;
  private drag: DragTrack | null = null;

  constructor(container: HTMLElement, callbacks: PanelCallbacks, tone?: ToneSource) {
    this.root = container;
    this.callbacks = callbacks;
    this.tone = tone ?? new ToneSource();
    this.buildSkeleton();
    this.wire();
  }

  private buildSkeleton(): void {
    this.root.classList.add("console");
    this.root.innerHTML = `
      <div id="connecting">Connecting to the session service...</div>
      <div id="retry-banner" hidden>
        <span id="retry-text">Command did not reach the service.</span>
        <button id="retry">Retry</button>
      </div>

      <div id="safety-screen" hidden>
        <h2>Shop entry</h2>
        <div id="avatar">&#129489;</div>
        <p>Clear every flagged hazard, then step in.</p>
        <div id="hazard-chips"></div>
        <button id="enter-shop" data-act="enter_shop">Enter the shop</button>
      </div>

      <div id="shop" hidden>
        <div id="session-line"></div>

        <div id="whiteboard">
          <h3>Whiteboard</h3>
          <div id="instruction"></div>
          <ul id="task-list"></ul>
          <h4>Warnings</h4>
          <ul id="warning-list"></ul>
          <ul id="notice-list"></ul>
        </div>

        <div id="machine-panel">
          <div id="spindle-group" class="group">
            <h4>Spindle</h4>
            <button id="spindle-switch" data-act="toggle_spindle"></button>
            <span id="spindle-rpm"></span>
            <span id="sound-icon"></span>
            <label>Speed dial
              <input id="speed-dial" type="number" min="0" step="1" value="0">
            </label>
          </div>

          <div id="quill-group" class="group">
            <h4>Quill</h4>
            <div id="quill-lever" data-drag="quill" title="Drag down to feed the quill">&#8597; lever</div>
            <span id="quill-depth"></span>
            <label>Feed (in/min)
              <input id="feed-rate" type="number" min="0" step="0.1" value="6">
            </label>
            <button id="quill-lock" data-act="lock_quill"></button>
          </div>

          <div id="table-group" class="group">
            <h4>Table</h4>
            <div id="wheel-x" data-drag="wheel-x" title="Drag to crank the X leadscrew">X &#8635;</div>
            <div id="wheel-y" data-drag="wheel-y" title="Drag to crank the Y leadscrew">Y &#8635;</div>
            <div id="dro">
              <div>X <span id="dro-x" class="digits"></span></div>
              <div>Y <span id="dro-y" class="digits"></span></div>
            </div>
            <label>Edge offset
              <input id="zero-offset" type="number" step="0.0001" value="0">
            </label>
            <button id="zero-x" data-act="zero_dro" data-axis="x">Zero X</button>
            <button id="zero-y" data-act="zero_dro" data-axis="y">Zero Y</button>
          </div>
        </div>

        <div id="tool-board">
          <h4>Tool board</h4>
          <div id="chuck-state"></div>
          <button id="install-chuck" data-act="install_chuck">Install chuck</button>
          <button id="remove-chuck" data-act="remove_chuck">Remove chuck</button>
          <button id="tighten-chuck" data-act="tighten_chuck">Chuck key: tighten</button>
          <button id="loosen-chuck" data-act="loosen_chuck">Chuck key: loosen</button>
          <button id="unload-tool" data-act="unload_tool">Unload tool</button>
          <div id="tool-rack"></div>
        </div>

        <div id="vise-panel">
          <h4>Vise and part</h4>
          <div id="vise-state"></div>
          <button id="brush-vise" data-act="brush_vise">Brush vise</button>
          <button id="insert-parallels" data-act="insert_parallels">Insert parallels</button>
          <button id="place-part" data-act="place_part">Place part</button>
          <label>Mallet force
            <select id="mallet-force">
              <option value="light">light</option>
              <option value="firm" selected>firm</option>
            </select>
          </label>
          <button id="mallet" data-act="mallet_tap">Mallet tap</button>
          <button id="tighten-vise" data-act="tighten_vise">Tighten vise</button>
          <button id="loosen-vise" data-act="loosen_vise">Loosen vise</button>
        </div>

        <div id="finishing">
          <h4>Bench</h4>
          <div id="deburr-list"></div>
        </div>

        <div id="blueprint">
          <h4>Blueprint</h4>
          <div id="blueprint-part"></div>
          <div id="blueprint-legend">pass / fail / pending</div>
        </div>
      </div>

      <div id="blocked-modal" hidden>
        <div class="modal-box">
          <h3>Blocked</h3>
          <div id="blocked-code" class="digits"></div>
          <div id="blocked-title"></div>
          <div id="blocked-detail"></div>
          <button id="ack-button" data-act="acknowledge">Acknowledge and continue</button>
        </div>
      </div>
    `;
  }

  private el<T extends HTMLElement>(id: string): T {
    return this.root.querySelector(`#${id}`) as T;
  }

  private inputValue(id: string): string {
    return this.el<HTMLInputElement>(id).value;
  }

  private wire(): void {
    this.root.addEventListener("click", (ev) => {
      const target = (ev.target as Element).closest("[data-act]");
      if (target === null || this.vm === null) {
        return;
      }
      if (target.getAttribute("data-act") === "acknowledge") {
        this.callbacks.onAcknowledge();
        return;
      }
      if (this.vm.pending !== null) {
        return; // one command in flight; late clicks are dropped
      }
      const action = this.actionFor(target as HTMLElement);
      if (action !== null) {
        this.callbacks.onAction(action);
      }
    });

    this.root.addEventListener("change", (ev) => {
      const target = ev.target as HTMLElement;
      if (target.id !== "speed-dial" || this.vm === null || this.vm.pending !== null) {
        return;
      }
      const action = speedDialChange((target as HTMLInputElement).value);
      if (action !== null) {
        this.callbacks.onAction(action);
      }
    });

    this.root.querySelector("#retry")?.addEventListener("click", () => this.callbacks.onRetry());

    this.root.addEventListener("mousedown", (ev) => {
      const target = (ev.target as Element).closest("[data-drag]");
      if (target === null || this.vm === null || this.vm.pending !== null) {
        return;
      }
      const me = ev as MouseEvent;
      this.drag = {
        widget: target.getAttribute("data-drag") as string,
        startX: me.clientX,
        startY: me.clientY,
        lastX: me.clientX,
        lastY: me.clientY,
      };
    });
    const doc = this.root.ownerDocument;
    doc.addEventListener("mousemove", (ev) => {
      if (this.drag !== null) {
        this.drag.lastX = (ev as MouseEvent).clientX;
        this.drag.lastY = (ev as MouseEvent).clientY;
      }
    });
    doc.addEventListener("mouseup", () => {
      const drag = this.drag;
      this.drag = null;
      if (drag === null || this.vm === null || this.vm.pending !== null) {
        return;
      }
      const action = this.dragAction(drag);
      if (action !== null) {
        this.callbacks.onAction(action);
      }
    });
  }

  private actionFor(widget: HTMLElement): Action | null {
    const vm = this.vm as ViewModel;
    const snap = vm.snapshot;
    const kind = widget.getAttribute("data-act") as string;
    switch (kind) {
      case "resolve_hazard":
        return { kind, hazard: widget.getAttribute("data-hazard") ?? "" };
      case "toggle_spindle":
        return snap === null ? null : spindleSwitchClick(snap.machine.spindle.power);
      case "lock_quill":
        return snap === null ? null : quillLockClick(snap.machine.spindle.quill_lock);
      case "zero_dro":
        return zeroDroClick(
          widget.getAttribute("data-axis") as "x" | "y",
          this.inputValue("zero-offset"),
        );
      case "load_tool":
        return { kind, tool_id: widget.getAttribute("data-tool") ?? "" };
      case "mallet_tap":
        return malletClick(this.el<HTMLSelectElement>("mallet-force").value);
      case "deburr":
        return { kind, hole_id: widget.getAttribute("data-hole") ?? "" };
      default:
        // Plain one-shot buttons carry the action kind and nothing else.
        return { kind };
    }
  }

  private dragAction(drag: DragTrack): Action | null {
    if (drag.widget === "wheel-x" || drag.widget === "wheel-y") {
      return handwheelDrag(drag.widget === "wheel-x" ? "x" : "y", drag.lastX - drag.startX);
    }
    if (drag.widget === "quill") {
      const feed = Number(this.inputValue("feed-rate"));
      return quillLeverDrag(drag.lastY - drag.startY, feed);
    }
    return null;
  }

  // -- projection ----------------------------------------------------------

  render(vm: ViewModel): void {
    this.vm = vm;
    const snap = vm.snapshot;
    this.el("connecting").hidden = snap !== null;
    const banner = this.el("retry-banner");
    banner.hidden = !(vm.pending !== null && vm.pending.failed);

    const modal = this.el("blocked-modal");
    const halted = vm.halted;
    modal.hidden = halted === null;
    if (halted !== null) {
      this.el("blocked-code").textContent = halted;
      this.el("blocked-title").textContent = vm.haltedTitle();
      const detail = vm.lastError?.payload ?? {};
      this.el("blocked-detail").textContent = JSON.stringify(detail);
    }

    if (snap === null) {
      this.el("safety-screen").hidden = true;
      this.el("shop").hidden = true;
      return;
    }

    const inShop = snap.machine.operator.in_shop;
    this.el("safety-screen").hidden = inShop;
    this.el("shop").hidden = !inShop;

    this.el("session-line").textContent =
      `session ${snap.session}  mode ${snap.mode}  status ${snap.status}  t=${snap.clock_s}s`;

    this.renderHazards(vm);
    this.renderWhiteboard(vm);
    this.renderMachine(vm);
    this.renderToolBoard(vm);
    this.renderVise(vm);
    this.renderDeburr(vm);
    this.renderBlueprint(vm);
    this.applyBusy(vm);
    this.applyHighlight(vm);
    this.tone.update(snap.sound);
  }

  private renderHazards(vm: ViewModel): void {
    const snap = vm.snapshot as NonNullable<ViewModel["snapshot"]>;
    const chips = snap.machine.operator.hazards
      .map((h) => {
        const label = HAZARD_LABELS[h] ?? h;
        return `<button class="hazard-chip" data-act="resolve_hazard" data-hazard="${h}">${label}</button>`;
      })
      .join("");
    this.el("hazard-chips").innerHTML = chips || "<span class='all-clear'>all clear</span>";
  }

  private renderWhiteboard(vm: ViewModel): void {
    const snap = vm.snapshot as NonNullable<ViewModel["snapshot"]>;
    this.el("instruction").textContent = vm.instructionText();

    const current = vm.guidedTarget();
    this.el("task-list").innerHTML = snap.progress.tasks
      .map((t) => {
        const mark = t.done ? "&#10003;" : "&#9633;";
        const cls = t.id === current ? "task current" : "task";
        return `<li class="${cls}" data-task="${t.id}">${mark} ${t.title}</li>`;
      })
      .join("");

    this.el("warning-list").innerHTML = vm.warnings
      .slice(-WARNING_DISPLAY_LIMIT)
      .map((w) => `<li class="warning" data-code="${w.code}">${w.code} (w${w.weight}) at t=${w.t}s</li>`)
      .join("");

    this.el("notice-list").innerHTML = vm.notices
      .map((n) => `<li class="notice">${n.code}: ${n.message}</li>`)
      .join("");
  }

  private renderMachine(vm: ViewModel): void {
    const snap = vm.snapshot as NonNullable<ViewModel["snapshot"]>;
    const spindle = snap.machine.spindle;
    this.el("spindle-switch").textContent = spindle.power ? "Spindle ON" : "Spindle OFF";
    this.el("spindle-rpm").textContent = `${spindle.speed_rpm} rpm`;
    const icon = this.el("sound-icon");
    icon.textContent = soundGlyph(snap.sound.mode);
    icon.title = `${snap.sound.mode} pitch=${snap.sound.pitch}`;

    this.el("quill-depth").textContent = `z ${snap.machine.quill_z_in.toFixed(4)} in`;
    this.el("quill-lock").textContent = spindle.quill_lock ? "Quill locked" : "Quill free";

    this.el("dro-x").textContent = formatDro(snap.dro_readings.x);
    this.el("dro-y").textContent = formatDro(snap.dro_readings.y);
  }

  private renderToolBoard(vm: ViewModel): void {
    const snap = vm.snapshot as NonNullable<ViewModel["snapshot"]>;
    const chuck = snap.machine.chuck;
    const held = chuck.held_tool;
    this.el("chuck-state").textContent = chuck.installed
      ? `chuck ${chuck.tightened ? "tight" : "loose"}, ` +
        (held ? `holding ${held.id}` : "empty")
      : "no chuck installed";

    const tools = vm.scenario?.tools ?? [];
    this.el("tool-rack").innerHTML = tools
      .map((t) => {
        const active = held !== null && held.id === t.id ? " in-chuck" : "";
        return (
          `<button class="tool-slot${active}" data-act="load_tool" data-tool="${t.id}">` +
          `${t.id} (${t.kind} ${t.diameter_in}")</button>`
        );
      })
      .join("");
  }

  private renderVise(vm: ViewModel): void {
    const snap = vm.snapshot as NonNullable<ViewModel["snapshot"]>;
    const vise = snap.machine.vise;
    const flags = [
      vise.brushed_clean ? "clean" : "dirty",
      vise.parallels_in ? "parallels in" : "no parallels",
      vise.part_in ? (vise.part_seated ? "part seated" : "part in") : "no part",
      vise.tightened ? "tight" : "open",
    ];
    this.el("vise-state").textContent = flags.join(", ");
  }

  private renderDeburr(vm: ViewModel): void {
    const snap = vm.snapshot as NonNullable<ViewModel["snapshot"]>;
    const burrs = snap.machine.workpiece.burrs;
    this.el("deburr-list").innerHTML = burrs.length
      ? burrs
          .map((h) => `<button class="deburr-hole" data-act="deburr" data-hole="${h}">Deburr ${h}</button>`)
          .join("")
      : "<span class='all-clear'>no burrs</span>";
  }

  private renderBlueprint(vm: ViewModel): void {
    this.el("blueprint-part").innerHTML = vm
      .overlayMarkers()
      .map(
        (m) =>
          `<span class="marker ${m.kind} ${m.status}" data-status="${m.status}"` +
          ` title="${m.holeId ?? "nominal"}"` +
          ` style="left:${m.leftPct}%;top:${m.topPct}%"></span>`,
      )
      .join("");
  }

  private applyBusy(vm: ViewModel): void {
    const busy = vm.pending !== null;
    this.root.classList.toggle("busy", busy);
    for (const btn of Array.from(this.root.querySelectorAll("button"))) {
      if (btn.id === "retry" || btn.id === "ack-button") {
        continue; // these two stay usable: retry after transport loss, ack while halted
      }
      (btn as HTMLButtonElement).disabled = busy;
    }
  }

  private applyHighlight(vm: ViewModel): void {
    for (const el of Array.from(this.root.querySelectorAll(".guided-next"))) {
      el.classList.remove("guided-next");
    }
    const target = vm.guidedTarget();
    if (target === null) {
      return;
    }
    const sectionId = GUIDED_SECTIONS[target];
    if (sectionId !== undefined) {
      this.el(sectionId).classList.add("guided-next");
    }
  }
}
