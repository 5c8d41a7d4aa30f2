/**
 * Control bindings: pointer gestures on panel widgets to wire actions.
 *
 * Each constructor returns exactly one action, or null when the gesture
 * amounts to nothing (zero-length drag, unparseable dial value). Widgets
 * call these at gesture end, so one gesture can never emit two commands.
 */
import type { Action } from "./api.js";

// Pixel scales for continuous controls. Powers of two, so converting a
// pixel delta back to engineering units is exact in binary floating point.
export const HANDWHEEL_PX_PER_REV = 128;
export const QUILL_PX_PER_IN = 64;

export type Gesture = "click" | "drag" | "change";

export interface BindingSpec {
  widget: string;
  gesture: Gesture;
  emits: string;
}

/** One row per interactive widget; the panel wires the DOM to match. */
export const CONTROL_BINDINGS: BindingSpec[] = [
  { widget: "hazard-chip", gesture: "click", emits: "resolve_hazard" },
  { widget: "enter-shop", gesture: "click", emits: "enter_shop" },
  { widget: "spindle-switch", gesture: "click", emits: "toggle_spindle" },
  { widget: "speed-dial", gesture: "change", emits: "set_speed" },
  { widget: "wheel-x", gesture: "drag", emits: "crank_table" },
  { widget: "wheel-y", gesture: "drag", emits: "crank_table" },
  { widget: "quill-lever", gesture: "drag", emits: "move_quill" },
  { widget: "quill-lock", gesture: "click", emits: "lock_quill" },
  { widget: "zero-x", gesture: "click", emits: "zero_dro" },
  { widget: "zero-y", gesture: "click", emits: "zero_dro" },
  { widget: "install-chuck", gesture: "click", emits: "install_chuck" },
  { widget: "remove-chuck", gesture: "click", emits: "remove_chuck" },
  { widget: "tighten-chuck", gesture: "click", emits: "tighten_chuck" },
  { widget: "loosen-chuck", gesture: "click", emits: "loosen_chuck" },
  { widget: "tool-slot", gesture: "click", emits: "load_tool" },
  { widget: "unload-tool", gesture: "click", emits: "unload_tool" },
  { widget: "brush-vise", gesture: "click", emits: "brush_vise" },
  { widget: "insert-parallels", gesture: "click", emits: "insert_parallels" },
  { widget: "place-part", gesture: "click", emits: "place_part" },
  { widget: "mallet", gesture: "click", emits: "mallet_tap" },
  { widget: "tighten-vise", gesture: "click", emits: "tighten_vise" },
  { widget: "loosen-vise", gesture: "click", emits: "loosen_vise" },
  { widget: "deburr-hole", gesture: "click", emits: "deburr" },
  { widget: "ack-button", gesture: "click", emits: "acknowledge_error" },
];

export function handwheelDrag(axis: "x" | "y", dxPx: number): Action | null {
  const revolutions = dxPx / HANDWHEEL_PX_PER_REV;
  if (revolutions === 0) {
    return null;
  }
  return { kind: "crank_table", axis, revolutions };
}

/**
 * Quill lever drag: vertical pixels set the depth change, the feed-rate
 * input sets how fast the operator advances, and duration falls out.
 * Dragging down (positive dy) feeds the quill down.
 */
export function quillLeverDrag(dyPx: number, feedIpm: number): Action | null {
  const delta = dyPx / QUILL_PX_PER_IN;
  if (delta === 0 || !(feedIpm > 0)) {
    return null;
  }
  return { kind: "move_quill", delta_z_in: delta, duration_s: (Math.abs(delta) * 60) / feedIpm };
}

export function speedDialChange(raw: string): Action | null {
  if (raw.trim() === "") {
    return null;
  }
  const rpm = Number(raw);
  if (!Number.isFinite(rpm)) {
    return null;
  }
  return { kind: "set_speed", rpm: Math.round(rpm) };
}

export function zeroDroClick(axis: "x" | "y", offsetRaw: string): Action | null {
  const offset = offsetRaw.trim() === "" ? 0 : Number(offsetRaw);
  if (!Number.isFinite(offset)) {
    return null;
  }
  return { kind: "zero_dro", axis, offset_in: offset };
}

export function spindleSwitchClick(currentlyPowered: boolean): Action {
  return { kind: "toggle_spindle", on: !currentlyPowered };
}

export function quillLockClick(currentlyLocked: boolean): Action {
  return { kind: "lock_quill", on: !currentlyLocked };
}

export function malletClick(force: string): Action {
  return { kind: "mallet_tap", force: force === "light" ? "light" : "firm" };
}
