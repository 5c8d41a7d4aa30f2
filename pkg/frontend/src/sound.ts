/**
 * Spindle sound rendering: an icon always, a synthesized tone where the
 * host provides Web Audio. Pitch maps linearly onto frequency.
 */

export function soundGlyph(mode: string): string {
  switch (mode) {
    case "normal_cut":
      return "♪"; // eighth note
    case "grind":
      return "⚠"; // warning sign
    default:
      return "·";
  }
}

const BASE_HZ = 160;
const SPAN_HZ = 740; // pitch 1.0 lands at 900 Hz

export function toneFrequency(pitch: number): number {
  return BASE_HZ + SPAN_HZ * pitch;
}

interface OscillatorHandle {
  frequency: { value: number };
  type: string;
  connect(node: unknown): void;
  start(): void;
  stop(): void;
}

interface AudioContextLike {
  createOscillator(): OscillatorHandle;
  createGain(): { gain: { value: number }; connect(node: unknown): void };
  destination: unknown;
}

/** Inert when the environment has no AudioContext (tests, old hosts). */
export class ToneSource {
  private ctx: AudioContextLike | null = null;
  private osc: OscillatorHandle | null = null;
  private playingMode = "idle";

  constructor(private readonly enabled: boolean = true) {}

  update(sound: { mode: string; pitch: number }): void {
    if (!this.enabled) {
      return;
    }
    if (sound.mode === "idle") {
      this.stop();
      return;
    }
    if (this.ctx === null) {
      const Ctx = (globalThis as Record<string, unknown>)["AudioContext"] as
        | (new () => AudioContextLike)
        | undefined;
      if (Ctx === undefined) {
        return;
      }
      this.ctx = new Ctx();
    }
    if (this.osc === null) {
      this.osc = this.ctx.createOscillator();
      const gain = this.ctx.createGain();
      gain.gain.value = 0.05;
      this.osc.connect(gain);
      gain.connect(this.ctx.destination);
      this.osc.start();
    }
    this.osc.type = sound.mode === "grind" ? "sawtooth" : "triangle";
    this.osc.frequency.value = toneFrequency(sound.pitch);
    this.playingMode = sound.mode;
  }

  stop(): void {
    if (this.osc !== null) {
      this.osc.stop();
      this.osc = null;
    }
    this.playingMode = "idle";
  }

  get mode(): string {
    return this.playingMode;
  }
}
