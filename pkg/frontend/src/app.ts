// DOM shell: renders the current session state into a root element and
// wires controls back into the state machine. No framework; plain elements.

import { ApiClient } from "./api.js";
import { ScreenState, Session, SessionView } from "./state.js";
import { CATEGORIES, SEVERITIES } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text) {
    node.textContent = text;
  }
  return node;
}

export class ListeningApp {
  readonly session: Session;
  private submitButton: HTMLButtonElement | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {
    this.session = new Session(api, (view) => this.render(view));
  }

  start(): Promise<void> {
    return this.session.start();
  }

  render(view: SessionView): void {
    this.root.textContent = "";
    switch (view.phase) {
      case "idle":
      case "loading":
        this.root.append(el("p", { class: "status" }, "loading…"));
        return;
      case "done":
        this.root.append(
          el("h2", {}, "All screens complete"),
          el("p", { class: "status" },
            `Thank you — all ${view.totalScreens} screens are submitted.`),
        );
        return;
      case "error":
        if (view.screen === null) {
          this.root.append(
            el("p", { class: "error", role: "alert" }, view.error ?? "request failed"),
            this.retryButton(),
          );
          return;
        }
        break; // screen-level error: fall through and re-render the screen
      case "rating":
      case "submitting":
        break;
    }
    if (view.screen !== null) {
      this.renderScreen(view.screen, view);
    }
  }

  private retryButton(): HTMLButtonElement {
    const button = el("button", { class: "retry" }, "retry");
    button.addEventListener("click", () => void this.session.retry());
    return button;
  }

  private renderScreen(screen: ScreenState, view: SessionView): void {
    const { payload } = screen;
    this.root.append(
      el("h2", {},
        `Screen ${payload.screen_id + 1} of ${payload.total_screens}`),
      el("p", { class: "hint" },
        "Play every sample, then rate each one from 0 (bad) to 100 (excellent)."),
    );

    const list = el("div", { class: "slots" });
    payload.slots.forEach((ref, index) => {
      list.append(this.renderSlot(screen, index, ref.slot, ref.audio_url));
    });
    this.root.append(list);

    if (view.error) {
      this.root.append(el("p", { class: "error", role: "alert" }, view.error));
    }

    const submit = el("button", { class: "submit" }, "submit ratings");
    submit.disabled = !screen.canSubmit() || view.phase === "submitting";
    submit.addEventListener("click", () => void this.session.submit());
    this.submitButton = submit;
    this.root.append(submit);
    if (view.phase === "error") {
      this.root.append(this.retryButton());
    }
  }

  private renderSlot(
    screen: ScreenState,
    index: number,
    slot: string,
    audioUrl: string,
  ): HTMLElement {
    const card = el("section", { class: "slot", "data-slot": slot });
    card.append(el("h3", {}, `Sample ${String.fromCharCode(65 + index)}`));

    const audio = el("audio", { src: this.api.audioUrl(audioUrl), preload: "none" });
    const play = el("button", { class: "play" }, "play");
    play.addEventListener("click", () => {
      screen.markPlayed(slot);
      try {
        void audio.play()?.catch(() => {
          /* autoplay may be blocked headlessly; the listen is still counted */
        });
      } catch {
        /* same: environments without real audio */
      }
      this.refresh();
    });
    card.append(play, audio);

    const value = el("output", { class: "value" }, String(screen.score(slot)));
    const slider = el("input", {
      type: "range",
      min: "0",
      max: "100",
      step: "1",
      value: String(screen.score(slot)),
      "aria-label": `rating for sample ${index + 1}`,
    });
    slider.addEventListener("input", () => {
      screen.setScore(slot, parseInt(slider.value, 10));
      value.textContent = slider.value;
      this.refresh();
    });
    card.append(slider, value);

    card.append(this.renderFlagControls(screen, slot));
    return card;
  }

  private renderFlagControls(screen: ScreenState, slot: string): HTMLElement {
    const details = el("details", { class: "flags" });
    details.append(el("summary", {}, "flag an error"));

    const category = el("select", { class: "category" });
    for (const name of CATEGORIES) {
      category.append(el("option", { value: name }, name));
    }
    const severity = el("select", { class: "severity" });
    for (const name of SEVERITIES) {
      severity.append(el("option", { value: name }, name));
    }
    const note = el("input", { type: "text", class: "note", placeholder: "note (optional)" });
    const add = el("button", { class: "add-flag" }, "add flag");
    const count = el("span", { class: "flag-count" }, "");
    add.addEventListener("click", () => {
      screen.stageFlag(slot, category.value, severity.value, note.value);
      note.value = "";
      const n = screen.stagedFlags().filter((f) => f.slot === slot).length;
      count.textContent = `${n} staged`;
    });
    details.append(category, severity, note, add, count);
    return details;
  }

  /** Update submit gating in place; a full re-render mid-drag would
   *  tear the slider out from under the pointer. */
  private refresh(): void {
    const screen = this.session.screen;
    if (this.submitButton !== null && screen !== null) {
      this.submitButton.disabled =
        !screen.canSubmit() || this.session.phase === "submitting";
    }
  }
}

export function mount(root: HTMLElement, baseUrl: string, listener: string): ListeningApp {
  const app = new ListeningApp(root, new ApiClient(baseUrl, listener));
  void app.start();
  return app;
}
