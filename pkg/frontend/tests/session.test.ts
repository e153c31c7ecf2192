// Conformance: a scripted session against a live rating service.
// Spawns the real server, completes listener L001's three screens through
// the client state machine, and checks the export for bit-exact integers.

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { ApiClient } from "../src/api.js";
import { Session } from "../src/state.js";

const HERE = dirname(fileURLToPath(import.meta.url));

const SYSTEMS = ["recordings", "SSWS", "hybrid", "SPSS"];
const PORT = 20000 + Math.floor(Math.random() * 20000);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;
let fixtureDir = "";

async function waitForServer(timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const response = await fetch(`${BASE}/api/export/ratings.csv`);
      if (response.ok) {
        return;
      }
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      throw new Error("rating service did not come up");
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
}

beforeAll(async () => {
  fixtureDir = mkdtempSync(join(tmpdir(), "ssws-ui-"));
  const made = spawnSync(
    "python3",
    [join(HERE, "fixtures", "make_fixture.py"), fixtureDir],
    { encoding: "utf-8" },
  );
  if (made.status !== 0) {
    throw new Error(`fixture build failed: ${made.stderr}`);
  }
  server = spawn(
    "python3",
    [
      "-m", "ssws.cli", "serve",
      "--plan", join(fixtureDir, "plan.txt"),
      "--listeners", "3",
      "--screens", "3",
      "--ratings", "3",
      "--assignment", join(fixtureDir, "assignment.json"),
      "--log", join(fixtureDir, "log.jsonl"),
      "--host", "127.0.0.1",
      "--port", String(PORT),
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  await waitForServer();
});

afterAll(() => {
  server?.kill();
  if (fixtureDir) {
    rmSync(fixtureDir, { recursive: true, force: true });
  }
});

function parseCsv(text: string): string[][] {
  return text
    .trim()
    .split(/\r?\n/)
    .map((line) => line.split(","));
}

describe("scripted session against the live service", () => {
  // distinct primes make the per-screen multisets unambiguous in the export
  const scoresByScreen = [
    [97, 3, 53, 11],
    [2, 89, 41, 67],
    [31, 0, 100, 73],
  ];
  const postedByUtterance = new Map<string, number[]>();
  const api = new ApiClient(BASE, "L001");
  const session = new Session(api);

  it("completes three screens with gating enforced at each one", async () => {
    await session.start();
    for (let k = 0; k < 3; k++) {
      expect(session.phase).toBe("rating");
      const screen = session.screen!;
      expect(screen.payload.screen_id).toBe(k);
      expect(screen.payload.total_screens).toBe(3);
      expect(screen.payload.slots).toHaveLength(4);

      // blocked before anything is played
      await session.submit();
      expect(session.lastError).toMatch(/play all/);

      // stream each stimulus like the audio element would, then mark played
      for (const ref of screen.payload.slots) {
        const response = await fetch(api.audioUrl(ref.audio_url));
        expect(response.status).toBe(200);
        expect(response.headers.get("content-type")).toContain("audio/wav");
        const bytes = new Uint8Array(await response.arrayBuffer());
        expect(String.fromCharCode(...bytes.slice(0, 4))).toBe("RIFF");
        screen.markPlayed(ref.slot);
      }

      // still blocked: sliders untouched
      await session.submit();
      expect(session.lastError).toMatch(/rate every/);

      screen.payload.slots.forEach((ref, i) => {
        screen.setScore(ref.slot, scoresByScreen[k][i]);
      });
      if (k === 1) {
        screen.stageFlag(screen.payload.slots[2].slot, "audio glitch", "critical", "click");
      }
      postedByUtterance.set(screen.payload.utterance_id, [...scoresByScreen[k]]);

      expect(screen.canSubmit()).toBe(true);
      await session.submit();
    }
    expect(session.phase).toBe("done");

    // the session stays done on a fresh fetch
    const again = await api.nextScreen();
    expect(again.done).toBe(true);
  });

  it("round-trips the submitted integers bit-exactly into the export", async () => {
    const text = await (await fetch(`${BASE}/api/export/ratings.csv`)).text();
    const [header, ...rows] = parseCsv(text);
    expect(header).toEqual([
      "listener_id", "utterance_id", "domain", "system", "score", "timestamp",
    ]);
    const mine = rows.filter((row) => row[0] === "L001");
    expect(mine).toHaveLength(12);

    const exported = new Map<string, number[]>();
    for (const row of mine) {
      const list = exported.get(row[1]) ?? [];
      list.push(Number(row[4]));
      exported.set(row[1], list);
    }
    expect(exported.size).toBe(3);
    for (const [utterance, scores] of postedByUtterance) {
      const got = exported.get(utterance);
      expect(got, `utterance ${utterance} missing from export`).toBeDefined();
      expect([...got!].sort((a, b) => a - b)).toEqual(
        [...scores].sort((a, b) => a - b),
      );
    }
  });

  it("recorded the staged flag with the ratings", async () => {
    const text = await (await fetch(`${BASE}/api/export/flags.csv`)).text();
    const [header, ...rows] = parseCsv(text);
    expect(header).toEqual([
      "annotator", "utterance", "system", "category", "severity", "note",
    ]);
    const mine = rows.filter((row) => row[0] === "L001");
    expect(mine).toHaveLength(1);
    expect(mine[0][3]).toBe("audio glitch");
    expect(mine[0][4]).toBe("critical");
    expect(SYSTEMS).toContain(mine[0][2]); // the analyst-side view is unblinded
  });

  it("no client-visible payload contains a system identifier", () => {
    expect(api.consumed.length).toBeGreaterThan(0);
    for (const payload of api.consumed) {
      for (const system of SYSTEMS) {
        expect(payload).not.toContain(system);
      }
    }
  });
});
