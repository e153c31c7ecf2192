// Screen and session state, kept free of DOM so the conformance tests can
// drive a whole scripted session headlessly.
//
// Gating rule: submit stays blocked until every stimulus has been played at
// least once and every slider has been touched. Sliders start at 50 but an
// untouched 50 is not a rating.

import { ApiClient, ApiError } from "./api.js";
import type { ScreenPayload, StagedFlag } from "./types.js";
import { CATEGORIES, SEVERITIES } from "./types.js";

export class ScreenState {
  private readonly played = new Set<string>();
  private readonly touched = new Set<string>();
  private readonly values = new Map<string, number>();
  private readonly flags: StagedFlag[] = [];
  private flagsSent = false;

  constructor(readonly payload: ScreenPayload) {
    for (const ref of payload.slots) {
      this.values.set(ref.slot, 50);
    }
  }

  private checkSlot(slot: string): void {
    if (!this.values.has(slot)) {
      throw new Error(`unknown slot ${slot}`);
    }
  }

  markPlayed(slot: string): void {
    this.checkSlot(slot);
    this.played.add(slot);
  }

  setScore(slot: string, value: number): void {
    this.checkSlot(slot);
    if (!Number.isInteger(value) || value < 0 || value > 100) {
      throw new Error(`score must be an integer in [0, 100], got ${value}`);
    }
    this.values.set(slot, value);
    this.touched.add(slot);
  }

  score(slot: string): number {
    this.checkSlot(slot);
    return this.values.get(slot)!;
  }

  stageFlag(slot: string, category: string, severity: string, note = ""): void {
    this.checkSlot(slot);
    if (!(CATEGORIES as readonly string[]).includes(category)) {
      throw new Error(`unknown category ${category}`);
    }
    if (!(SEVERITIES as readonly string[]).includes(severity)) {
      throw new Error(`unknown severity ${severity}`);
    }
    this.flags.push({ slot, category, severity, note });
  }

  stagedFlags(): readonly StagedFlag[] {
    return this.flags;
  }

  /** Flags not yet acknowledged by the service (cleared after a flags ack). */
  pendingFlags(): StagedFlag[] {
    return this.flagsSent ? [] : [...this.flags];
  }

  markFlagsSent(): void {
    this.flagsSent = true;
  }

  blockReason(): string | null {
    const unplayed = this.payload.slots.filter((s) => !this.played.has(s.slot));
    if (unplayed.length > 0) {
      return `play all stimuli before submitting (${unplayed.length} unplayed)`;
    }
    const untouched = this.payload.slots.filter((s) => !this.touched.has(s.slot));
    if (untouched.length > 0) {
      return `rate every stimulus (${untouched.length} slider(s) untouched)`;
    }
    return null;
  }

  canSubmit(): boolean {
    return this.blockReason() === null;
  }

  /** Scores exactly as displayed, keyed by slot token. */
  scores(): Record<string, number> {
    const out: Record<string, number> = {};
    for (const [slot, value] of this.values) {
      out[slot] = value;
    }
    return out;
  }
}

export type SessionPhase = "idle" | "loading" | "rating" | "submitting" | "done" | "error";

export interface SessionView {
  phase: SessionPhase;
  screen: ScreenState | null;
  totalScreens: number;
  error: string | null;
}

export class Session {
  phase: SessionPhase = "idle";
  screen: ScreenState | null = null;
  totalScreens = 0;
  lastError: string | null = null;
  private inFlight = false;

  constructor(
    private readonly api: ApiClient,
    private readonly onChange: (view: SessionView) => void = () => {},
  ) {}

  private emit(): void {
    this.onChange({
      phase: this.phase,
      screen: this.screen,
      totalScreens: this.totalScreens,
      error: this.lastError,
    });
  }

  async start(): Promise<void> {
    this.phase = "loading";
    this.emit();
    await this.fetchNext();
  }

  private async fetchNext(): Promise<void> {
    try {
      const payload = await this.api.nextScreen();
      this.totalScreens = payload.total_screens;
      if (payload.done) {
        this.phase = "done";
        this.screen = null;
      } else {
        this.phase = "rating";
        this.screen = new ScreenState(payload);
      }
      this.lastError = null;
    } catch (err) {
      this.phase = "error";
      this.lastError = err instanceof Error ? err.message : String(err);
    }
    this.emit();
  }

  /**
   * Post staged flags then the ratings; on success advance to the next
   * screen. A failed attempt keeps all slider values and staged flags so
   * retry() loses nothing; flags already acknowledged are not re-posted.
   */
  async submit(): Promise<void> {
    if (this.inFlight) {
      return; // one submission at a time; the second click is a no-op
    }
    const screen = this.screen;
    if (this.phase !== "rating" && this.phase !== "error") {
      return;
    }
    if (screen === null) {
      return;
    }
    const reason = screen.blockReason();
    if (reason !== null) {
      this.lastError = reason;
      this.emit();
      return;
    }
    this.inFlight = true;
    this.phase = "submitting";
    this.emit();
    try {
      const pending = screen.pendingFlags();
      if (pending.length > 0) {
        await this.api.submitFlags(screen.payload.screen_id, pending);
        screen.markFlagsSent();
      }
      await this.api.submitRatings(screen.payload.screen_id, screen.scores());
      this.inFlight = false;
      await this.fetchNext();
    } catch (err) {
      this.inFlight = false;
      this.phase = "error";
      if (err instanceof ApiError && err.status === 409) {
        // already recorded (e.g. ack lost in transit): just move on
        await this.fetchNext();
        return;
      }
      this.lastError = err instanceof Error ? err.message : String(err);
      this.emit();
    }
  }

  /** Retry after a network or server failure, keeping all entered data. */
  async retry(): Promise<void> {
    if (this.phase !== "error") {
      return;
    }
    if (this.screen !== null) {
      this.phase = "rating";
      await this.submit();
    } else {
      await this.fetchNext();
    }
  }
}
