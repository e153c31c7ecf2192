// Shapes of the rating service's JSON API, as consumed by this client.
// The payloads never include system identities; slots are opaque tokens.

export interface SlotRef {
  slot: string;
  audio_url: string;
}

export interface ScreenPayload {
  done: false;
  screen_id: number;
  total_screens: number;
  utterance_id: string;
  slots: SlotRef[];
}

export interface DonePayload {
  done: true;
  total_screens: number;
}

export type NextPayload = ScreenPayload | DonePayload;

export interface RatingsAck {
  ok: boolean;
  screen_id: number;
  done: boolean;
}

export interface FlagsAck {
  ok: boolean;
  count: number;
}

export interface StagedFlag {
  slot: string;
  category: string;
  severity: string;
  note: string;
}

export const CATEGORIES = [
  "audio glitch",
  "incorrect pause insertion",
  "incorrect pitch accent",
  "intonation/prosody",
  "pronunciation",
  "stress",
  "text normalisation",
  "other",
] as const;

export const SEVERITIES = ["critical", "medium", "minor"] as const;
