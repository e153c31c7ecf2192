"""Listening-test service: serves blinded screens, collects ratings and flags.

The store is the real state machine; FastAPI routes are a thin shell over
it.  Every acknowledged submission is appended to a line-delimited JSON log
(flushed and fsynced before the ack) and the log is replayed through the
same apply path on boot, so restarts lose nothing.  Stimulus slots are
keyed by salted-hash tokens; no payload ever names a system.
"""

import hashlib
import io
import json
import os
import threading
from datetime import datetime, timezone

from ssws.mushra.design import Assignment, TestPlan
from ssws.mushra.errors import FLAGS_CSV_COLUMNS, ErrorFlag, FlagError
from ssws.mushra.stats import RATINGS_CSV_COLUMNS, MushraRating

import csv


class ServiceError(RuntimeError):
    http_status = 400


class UnknownEntity(ServiceError):
    http_status = 404


class Conflict(ServiceError):
    http_status = 409


class BadSubmission(ServiceError):
    http_status = 400


def _utc_now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class EvalStore:
    """Sessions, durable rating/flag collection, CSV exports."""

    def __init__(self, plan: TestPlan, assignment: Assignment, audio_paths,
                 log_path=None, clock=_utc_now):
        self.plan = plan
        self.assignment = assignment
        self.audio_paths = dict(audio_paths)
        self.domain_of = {u: d for u, d in plan.utterances}
        self.clock = clock
        self._lock = threading.Lock()

        # token -> (listener, screen index, slot index, utterance, system)
        self._tokens = {}
        # (listener, screen index) -> [token per slot]
        self._slots = {}
        salt = f"screen-salt-{assignment.seed}"
        for lid, screens in assignment.screens.items():
            for k, screen in enumerate(screens):
                toks = []
                for slot, system in enumerate(screen.system_order):
                    raw = f"{salt}|{lid}|{k}|{slot}"
                    tok = hashlib.sha256(raw.encode()).hexdigest()[:16]
                    self._tokens[tok] = (lid, k, slot,
                                         screen.utterance_id, system)
                    toks.append(tok)
                self._slots[(lid, k)] = toks

        self.cursor = {lid: 0 for lid in assignment.screens}
        self.ratings = []           # MushraRating, ack order
        self.rating_times = []
        self.flags = []             # ErrorFlag
        self.flag_notes_ts = []

        self._log_fh = None
        if log_path is not None:
            if os.path.exists(log_path):
                self._replay(log_path)
            self._log_fh = open(log_path, "a", encoding="utf-8")

    # -- log ---------------------------------------------------------------

    def _replay(self, log_path):
        with open(log_path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
        for i, line in enumerate(lines):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                if i == len(lines) - 1:
                    break           # torn final write; everything acked is intact
                raise ServiceError(f"corrupt log record at line {i + 1}")
            self._apply(record)

    def _append(self, record):
        if self._log_fh is not None:
            self._log_fh.write(json.dumps(record) + "\n")
            self._log_fh.flush()
            os.fsync(self._log_fh.fileno())

    def close(self):
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None

    # -- sessions ----------------------------------------------------------

    def _check_listener(self, listener):
        if listener not in self.cursor:
            raise UnknownEntity(f"unknown listener {listener!r}")

    def next_screen(self, listener):
        with self._lock:
            self._check_listener(listener)
            k = self.cursor[listener]
            total = len(self.assignment.screens[listener])
            if k >= total:
                return {"done": True, "total_screens": total}
            screen = self.assignment.screens[listener][k]
            slots = [{"slot": tok, "audio_url": f"/audio/{tok}.wav"}
                     for tok in self._slots[(listener, k)]]
            return {"done": False, "screen_id": k, "total_screens": total,
                    "utterance_id": screen.utterance_id, "slots": slots}

    def submit_ratings(self, listener, screen_id, scores):
        with self._lock:
            record = {"kind": "ratings", "listener": listener,
                      "screen": int(screen_id), "scores": dict(scores),
                      "ts": self.clock()}
            self._validate_ratings(record)
            self._append(record)
            self._apply_ratings(record)
            done = self.cursor[listener] >= len(self.assignment.screens[listener])
            return {"ok": True, "screen_id": int(screen_id), "done": done}

    def submit_flags(self, listener, screen_id, flags):
        with self._lock:
            record = {"kind": "flags", "listener": listener,
                      "screen": int(screen_id), "flags": list(flags),
                      "ts": self.clock()}
            self._validate_flags(record)
            self._append(record)
            self._apply_flags(record)
            return {"ok": True, "count": len(flags)}

    # -- validation + state transitions (shared submit/replay path) --------

    def _validate_ratings(self, record):
        listener, screen_id = record["listener"], record["screen"]
        self._check_listener(listener)
        current = self.cursor[listener]
        if screen_id < current:
            raise Conflict(f"screen {screen_id} already submitted")
        if screen_id > current:
            raise BadSubmission(f"screen {screen_id} is not the current "
                                f"screen (expected {current})")
        if current >= len(self.assignment.screens[listener]):
            raise Conflict("session already complete")
        expected = self._slots[(listener, screen_id)]
        scores = record["scores"]
        missing = [t for t in expected if t not in scores]
        if missing:
            raise BadSubmission(f"missing scores for {len(missing)} slot(s)")
        unknown = [t for t in scores if t not in expected]
        if unknown:
            raise BadSubmission(f"unknown slot(s) {unknown}")
        for tok, score in scores.items():
            if not isinstance(score, int) or isinstance(score, bool) \
                    or not 0 <= score <= 100:
                raise BadSubmission(f"score {score!r} not an integer in [0, 100]")

    def _apply_ratings(self, record):
        listener, screen_id = record["listener"], record["screen"]
        for tok in self._slots[(listener, screen_id)]:
            _, _, _, utt, system = self._tokens[tok]
            self.ratings.append(MushraRating(
                listener_id=listener, utterance_id=utt,
                domain=self.domain_of[utt], system_id=system,
                score=record["scores"][tok]))
            self.rating_times.append(record["ts"])
        self.cursor[listener] = screen_id + 1

    def _validate_flags(self, record):
        listener, screen_id = record["listener"], record["screen"]
        self._check_listener(listener)
        if not 0 <= screen_id < len(self.assignment.screens[listener]):
            raise BadSubmission(f"screen {screen_id} out of range")
        if screen_id > self.cursor[listener]:
            raise BadSubmission(f"screen {screen_id} has not been served yet")
        expected = set(self._slots[(listener, screen_id)])
        for f in record["flags"]:
            if f.get("slot") not in expected:
                raise BadSubmission(f"flag references unknown slot {f.get('slot')!r}")
            try:
                self._flag_from(listener, f)
            except FlagError as e:
                raise BadSubmission(str(e)) from e

    def _flag_from(self, listener, f):
        _, _, _, utt, system = self._tokens[f["slot"]]
        return ErrorFlag(utterance_id=utt, system_id=system,
                         category=f.get("category", ""),
                         severity=f.get("severity", ""),
                         annotator_id=listener, note=f.get("note", ""))

    def _apply_flags(self, record):
        for f in record["flags"]:
            self.flags.append(self._flag_from(record["listener"], f))
            self.flag_notes_ts.append(record["ts"])

    def _apply(self, record):
        kind = record.get("kind")
        if kind == "ratings":
            self._validate_ratings(record)
            self._apply_ratings(record)
        elif kind == "flags":
            self._validate_flags(record)
            self._apply_flags(record)
        else:
            raise ServiceError(f"unknown log record kind {kind!r}")

    # -- exports -----------------------------------------------------------

    def export_ratings_csv(self) -> str:
        with self._lock:
            buf = io.StringIO()
            writer = csv.writer(buf)
            writer.writerow(RATINGS_CSV_COLUMNS)
            for r, ts in zip(self.ratings, self.rating_times):
                writer.writerow([r.listener_id, r.utterance_id, r.domain,
                                 r.system_id, r.score, ts])
            return buf.getvalue()

    def export_flags_csv(self) -> str:
        with self._lock:
            buf = io.StringIO()
            writer = csv.writer(buf)
            writer.writerow(FLAGS_CSV_COLUMNS)
            for f in self.flags:
                writer.writerow([f.annotator_id, f.utterance_id, f.system_id,
                                 f.category, f.severity, f.note])
            return buf.getvalue()

    def audio_path(self, token) -> str:
        if token not in self._tokens:
            raise UnknownEntity(f"unknown stimulus token {token!r}")
        _, _, _, utt, system = self._tokens[token]
        try:
            return self.audio_paths[(utt, system)]
        except KeyError:
            raise UnknownEntity(f"no audio registered for utterance {utt!r}")


# ---------------------------------------------------------------------------
# HTTP shell


def create_app(store: EvalStore):
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import FileResponse, PlainTextResponse
    from pydantic import BaseModel

    class RatingsIn(BaseModel):
        screen_id: int
        scores: dict

    class FlagIn(BaseModel):
        slot: str
        category: str
        severity: str
        note: str = ""

    class FlagsIn(BaseModel):
        screen_id: int
        flags: list

    app = FastAPI(title="ssws eval service")
    app.state.store = store

    def guard(fn, *args):
        try:
            return fn(*args)
        except ServiceError as e:
            raise HTTPException(status_code=e.http_status, detail=str(e))

    @app.get("/api/session/{listener}/next")
    def next_screen(listener: str):
        return guard(store.next_screen, listener)

    @app.post("/api/session/{listener}/ratings")
    def submit_ratings(listener: str, body: RatingsIn):
        return guard(store.submit_ratings, listener, body.screen_id, body.scores)

    @app.post("/api/session/{listener}/flags")
    def submit_flags(listener: str, body: FlagsIn):
        flags = [f if isinstance(f, dict) else dict(f) for f in body.flags]
        return guard(store.submit_flags, listener, body.screen_id, flags)

    @app.get("/api/export/ratings.csv")
    def export_ratings():
        return PlainTextResponse(store.export_ratings_csv(),
                                 media_type="text/csv")

    @app.get("/api/export/flags.csv")
    def export_flags():
        return PlainTextResponse(store.export_flags_csv(),
                                 media_type="text/csv")

    @app.get("/audio/{token}.wav")
    def audio(token: str):
        path = guard(store.audio_path, token)
        if not os.path.exists(path):
            raise HTTPException(status_code=404,
                                detail=f"audio file missing on disk")
        return FileResponse(path, media_type="audio/wav")

    return app
