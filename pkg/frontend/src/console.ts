/**
 * Trainer console: one session, one panel, one command in flight.
 *
 * Commands go out with client-generated idempotency keys. A transport
 * failure keeps the command pending and offers a retry that reuses the
 * same key, so the service never executes it twice. Service-side
 * rejections conclude the command and surface on the whiteboard.
 */
import { ApiError, SessionClient, type Action, type ClientOptions } from "./api.js";
import { ConsolePanel } from "./panel.js";
import { ToneSource } from "./sound.js";
import { ViewModel } from "./viewmodel.js";

export interface ConsoleOptions extends Omit<ClientOptions, "baseUrl"> {
  baseUrl: string;
  container: HTMLElement;
  mode?: "free" | "guided";
  tone?: ToneSource;
}

export class TrainerConsole {
  readonly vm: ViewModel;
  readonly panel: ConsolePanel;
  readonly client: SessionClient;
  sessionId: string | null = null;

  private readonly mode: "free" | "guided";
  private readonly keyPrefix: string;
  private keyCounter = 0;
  private inflight: Promise<void> = Promise.resolve();
  private closeEvents: (() => void) | null = null;

  constructor(options: ConsoleOptions) {
    this.client = new SessionClient(options);
    this.mode = options.mode ?? "free";
    this.vm = new ViewModel();
    this.panel = new ConsolePanel(
      options.container,
      {
        onAction: (action) => void this.perform(action),
        onAcknowledge: () => void this.acknowledge(),
        onRetry: () => this.retry(),
      },
      options.tone,
    );
    this.keyPrefix = Math.random().toString(36).slice(2, 10);
    this.panel.render(this.vm);
  }

  async start(): Promise<void> {
    const created = await this.client.createSession(this.mode);
    this.sessionId = created.session;
    this.vm.applySnapshot(created.snapshot);
    this.vm.scenario = await this.client.getScenario(created.session);
    this.closeEvents = this.client.openEvents(created.session, 1, {
      onEvent: (doc) => {
        this.vm.applyEvent(doc);
        this.panel.render(this.vm);
      },
    });
    this.panel.render(this.vm);
  }

  stop(): void {
    this.closeEvents?.();
    this.closeEvents = null;
  }

  /**
   * Submit one action. Returns false without touching the wire when a
   * command is already in flight or no session exists yet; that is what
   * turns a double click into a single command.
   */
  perform(action: Action): boolean {
    if (this.sessionId === null) {
      return false;
    }
    this.keyCounter += 1;
    const key = `${this.keyPrefix}-${this.keyCounter}`;
    if (this.vm.beginCommand(action, key) === null) {
      return false;
    }
    this.panel.render(this.vm);
    this.track(this.dispatch(key, action));
    return true;
  }

  /** Acknowledge the halting error shown on the whiteboard, if any. */
  acknowledge(): boolean {
    const code = this.vm.halted;
    if (code === null) {
      return false;
    }
    return this.perform({ kind: "acknowledge_error", code });
  }

  /** Resend a transport-failed command under its original key. */
  retry(): void {
    const pending = this.vm.pending;
    if (pending === null || !pending.failed) {
      return;
    }
    pending.failed = false;
    this.panel.render(this.vm);
    this.track(this.dispatch(pending.key, pending.action));
  }

  /** Resolves once every command issued so far has concluded. */
  async settled(): Promise<void> {
    let seen: Promise<void>;
    do {
      seen = this.inflight;
      await seen;
    } while (seen !== this.inflight);
  }

  private track(work: Promise<void>): void {
    this.inflight = this.inflight.then(() => work);
  }

  private async dispatch(key: string, action: Action): Promise<void> {
    try {
      const result = await this.client.submit(this.sessionId as string, action, key);
      for (const ev of result.events) {
        this.vm.applyEvent(ev);
      }
      this.vm.applySnapshot(result.snapshot);
      this.vm.settleCommand();
      if (result.verdict.decision === "blocked" && result.snapshot.halted === null) {
        // Refused but not halting: no acknowledgement owed, so this goes
        // on the whiteboard instead of the modal.
        const code = result.verdict.code ?? "BLOCKED";
        const title = this.vm.scenario?.catalog[code]?.title;
        this.vm.pushNotice(code, title ?? "action refused");
      }
    } catch (err) {
      if (err instanceof ApiError) {
        this.vm.pushNotice(err.code, err.message);
        this.vm.settleCommand();
      } else {
        this.vm.failCommand();
      }
    }
    this.panel.render(this.vm);
  }
}
