/**
 * Console view state: the latest snapshot plus everything the whiteboard
 * accumulates along the way.
 *
 * This is a fold over service documents and nothing else. Applying the
 * same snapshot and event stream in order always produces the same view
 * state, no matter when renders happen in between, and no field here is
 * ever computed from machine physics on the client side.
 */
import type { Action, EventDoc, ScenarioDoc, Snapshot } from "./api.js";

export interface PendingCommand {
  key: string;
  action: Action;
  failed: boolean; // transport failure; eligible for retry under the same key
}

export interface WarningEntry {
  seq: number;
  t: number;
  code: string;
  weight: number;
  detail: Record<string, unknown>;
}

export interface NoticeEntry {
  code: string;
  message: string;
}

export interface OverlayMarker {
  kind: "nominal" | "extra";
  status: "pass" | "fail" | "pending";
  holeId: string | null;
  leftPct: number;
  topPct: number;
}

const NOTICE_LIMIT = 5;

export function formatDro(value: number): string {
  // Four decimal places, matching the display resolution. The text must
  // parse back to the snapshot's number exactly; see the render tests.
  return value.toFixed(4);
}

export class ViewModel {
  snapshot: Snapshot | null = null;
  scenario: ScenarioDoc | null = null;
  pending: PendingCommand | null = null;
  warnings: WarningEntry[] = [];
  notices: NoticeEntry[] = [];
  lastError: EventDoc | null = null;
  lastEventSeq = 0;

  /** Replace the snapshot unless the incoming one is older. */
  applySnapshot(snapshot: Snapshot): void {
    if (this.snapshot !== null && snapshot.last_seq < this.snapshot.last_seq) {
      return;
    }
    this.snapshot = snapshot;
  }

  /**
   * Fold one event. Events arrive both inside submit responses and over
   * the stream, so duplicates are dropped by sequence number.
   */
  applyEvent(doc: EventDoc): void {
    if (doc.seq <= this.lastEventSeq) {
      return;
    }
    this.lastEventSeq = doc.seq;
    if (doc.kind === "warning") {
      this.warnings.push({
        seq: doc.seq,
        t: doc.t,
        code: doc.code,
        weight: doc.weight ?? 0,
        detail: doc.payload,
      });
    } else if (doc.kind === "error") {
      this.lastError = doc;
    }
  }

  beginCommand(action: Action, key: string): PendingCommand | null {
    if (this.pending !== null || this.snapshot === null) {
      return null;
    }
    this.pending = { key, action, failed: false };
    return this.pending;
  }

  settleCommand(): void {
    this.pending = null;
  }

  failCommand(): void {
    if (this.pending !== null) {
      this.pending.failed = true;
    }
  }

  pushNotice(code: string, message: string): void {
    this.notices.push({ code, message });
    if (this.notices.length > NOTICE_LIMIT) {
      this.notices.shift();
    }
  }

  get halted(): string | null {
    return this.snapshot?.halted ?? null;
  }

  /** Task id the guided whiteboard should point at; null in free mode or when done. */
  guidedTarget(): string | null {
    if (this.snapshot === null || this.snapshot.mode !== "guided") {
      return null;
    }
    return this.snapshot.progress.current_guided;
  }

  instructionText(): string {
    if (this.snapshot === null) {
      return "";
    }
    if (this.snapshot.mode !== "guided") {
      return "Open practice: work the blueprint in any safe order.";
    }
    const current = this.snapshot.progress.current_guided;
    if (current === null) {
      return "All steps complete.";
    }
    const task = this.snapshot.progress.tasks.find((t) => t.id === current);
    return task ? task.title : current;
  }

  haltedTitle(): string {
    const code = this.halted;
    if (code === null) {
      return "";
    }
    return this.scenario?.catalog[code]?.title ?? code;
  }

  /**
   * Blueprint overlay markers. Nominal positions come straight from the
   * scenario drawing, scaled onto the part rectangle; actual holes are
   * placed by their offset from the part origin carried in the snapshot.
   */
  overlayMarkers(): OverlayMarker[] {
    if (this.scenario === null || this.snapshot === null) {
      return [];
    }
    const bp = this.scenario.blueprint;
    const wp = this.snapshot.machine.workpiece;
    const markers: OverlayMarker[] = [];
    const claimed = new Set<number>();

    for (const nominal of bp.holes) {
      const nomX = wp.origin_x + nominal.x;
      const nomY = wp.origin_y + nominal.y;
      let best = -1;
      let bestDist = Infinity;
      for (let k = 0; k < wp.holes.length; k += 1) {
        if (claimed.has(k)) {
          continue;
        }
        const hole = wp.holes[k];
        const dist = Math.hypot(hole.x - nomX, hole.y - nomY);
        if (dist <= bp.position_tol_in + 1e-9 && dist < bestDist) {
          best = k;
          bestDist = dist;
        }
      }
      let status: OverlayMarker["status"] = "pending";
      let holeId: string | null = null;
      if (best >= 0) {
        claimed.add(best);
        const hole = wp.holes[best];
        holeId = hole.id;
        const diaOk = Math.abs(hole.diameter_in - nominal.diameter_in) <= bp.diameter_tol_in + 1e-9;
        const depthOk = Math.abs(hole.depth_in - nominal.depth_in) <= bp.depth_tol_in + 1e-9;
        const disqualified = bp.disqualifying_flags.some(
          (flag) => (hole as unknown as Record<string, unknown>)[flag] === true,
        );
        status = diaOk && depthOk && !disqualified ? "pass" : "fail";
      }
      markers.push({
        kind: "nominal",
        status,
        holeId,
        leftPct: (nominal.x / wp.length_in) * 100,
        topPct: (1 - nominal.y / wp.width_in) * 100,
      });
    }

    for (let k = 0; k < wp.holes.length; k += 1) {
      if (claimed.has(k)) {
        continue;
      }
      const hole = wp.holes[k];
      markers.push({
        kind: "extra",
        status: "fail",
        holeId: hole.id,
        leftPct: ((hole.x - wp.origin_x) / wp.length_in) * 100,
        topPct: (1 - (hole.y - wp.origin_y) / wp.width_in) * 100,
      });
    }
    return markers;
  }
}
