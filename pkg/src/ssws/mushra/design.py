"""Balanced MUSHRA test assignments.

A plan pins listeners x screens against utterances x ratings.  The builder
deals each domain's utterance slots round-robin across listeners, so every
utterance lands in exactly ratings_per_utterance distinct listeners' screen
lists and every listener's domain mix hits the proportional quota exactly.
Screen order within a listener and system order within a screen are fresh
seeded permutations (the latter is what blinds the test).
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass

import numpy as np

RETRY_CAP = 1000


class DesignError(RuntimeError):
    pass


@dataclass
class TestPlan:
    __test__ = False            # keep pytest from collecting the name

    utterances: list            # (utterance_id, domain) pairs
    systems: list
    n_listeners: int
    screens_per_listener: int
    ratings_per_utterance: int
    seed: int = 0

    def __post_init__(self):
        if not self.utterances:
            raise DesignError("plan has no utterances")
        ids = [u for u, _ in self.utterances]
        if len(set(ids)) != len(ids):
            raise DesignError("duplicate utterance ids in plan")
        if len(self.systems) < 2:
            raise DesignError(f"need at least 2 systems, got {len(self.systems)}")
        if len(set(self.systems)) != len(self.systems):
            raise DesignError("duplicate system ids in plan")
        for name in ("n_listeners", "screens_per_listener", "ratings_per_utterance"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise DesignError(f"{name} must be a positive integer, got {v!r}")

    def domains(self):
        """Domain names in first-appearance order."""
        seen = []
        for _, d in self.utterances:
            if d not in seen:
                seen.append(d)
        return seen

    def listener_ids(self):
        return [f"L{i + 1:03d}" for i in range(self.n_listeners)]


@dataclass
class Screen:
    utterance_id: str
    system_order: list          # on-screen slot order; server-side secret


@dataclass
class Assignment:
    systems: list
    screens: dict               # listener id -> [Screen, ...]
    seed: int


def domain_quota(plan: TestPlan) -> dict:
    """Screens per listener for each domain, proportional to domain size.

    quota_d = screens_per_listener * |domain d| / |utterances|, which must be
    an integer for every domain or the configuration is rejected.
    """
    counts = Counter(d for _, d in plan.utterances)
    U = len(plan.utterances)
    quotas = {}
    bad = []
    for d in plan.domains():
        num = plan.screens_per_listener * counts[d]
        if num % U:
            bad.append(f"{d}: {plan.screens_per_listener} x {counts[d]} / {U} "
                       f"leaves remainder {num % U}")
        else:
            quotas[d] = num // U
    if bad:
        raise DesignError("non-integral domain quotas: " + "; ".join(bad))
    return quotas


def build_assignment(plan: TestPlan) -> Assignment:
    lhs = plan.n_listeners * plan.screens_per_listener
    rhs = len(plan.utterances) * plan.ratings_per_utterance
    if lhs != rhs:
        raise DesignError(
            f"infeasible plan: {plan.n_listeners} listeners x "
            f"{plan.screens_per_listener} screens = {lhs} ratings offered, but "
            f"{len(plan.utterances)} utterances x {plan.ratings_per_utterance} "
            f"ratings = {rhs} required")
    quotas = domain_quota(plan)
    by_domain = {}
    for u, d in plan.utterances:
        by_domain.setdefault(d, []).append(u)
    for d, q in quotas.items():
        if q > len(by_domain[d]):
            raise DesignError(
                f"infeasible plan: domain '{d}' quota {q} screens per listener "
                f"exceeds its {len(by_domain[d])} utterances (repeats forbidden)")

    listeners = plan.listener_ids()
    rng = np.random.default_rng(plan.seed)
    per_listener = None
    for _ in range(RETRY_CAP):
        candidate = {lid: [] for lid in listeners}
        ok = True
        for d in plan.domains():
            utts = list(by_domain[d])
            q = quotas[d]
            rng.shuffle(utts)
            # each utterance repeated R times, dealt in runs of q; a run is a
            # window of < |utts| consecutive slots of the cycle, so it never
            # repeats an utterance and consecutive runs hit distinct listeners
            slots = [utts[i % len(utts)]
                     for i in range(len(utts) * plan.ratings_per_utterance)]
            order = rng.permutation(plan.n_listeners)
            for j, li in enumerate(order):
                run = slots[j * q : (j + 1) * q]
                if len(set(run)) != len(run):
                    ok = False
                    break
                candidate[listeners[li]].extend(run)
            if not ok:
                break
        if ok:
            per_listener = candidate
            break
    if per_listener is None:
        raise DesignError(
            f"assignment construction exhausted {RETRY_CAP} retries (seed {plan.seed})")

    screens = {}
    for lid in listeners:
        utts = per_listener[lid]
        order = rng.permutation(len(utts))      # interleave the domain runs
        screens[lid] = [
            Screen(utterance_id=utts[i],
                   system_order=[plan.systems[j]
                                 for j in rng.permutation(len(plan.systems))])
            for i in order
        ]
    return Assignment(systems=list(plan.systems), screens=screens, seed=plan.seed)


def validate_assignment(assignment: Assignment, plan: TestPlan) -> list:
    """Check every invariant; returns a list of violations (empty = valid)."""
    problems = []
    domain_of = {u: d for u, d in plan.utterances}
    try:
        quotas = domain_quota(plan)
    except DesignError as e:
        problems.append(str(e))
        quotas = {}

    expected = plan.listener_ids()
    if sorted(assignment.screens) != sorted(expected):
        problems.append(
            f"listener set mismatch: {len(assignment.screens)} listeners in "
            f"assignment vs {len(expected)} in plan")
    if sorted(assignment.systems) != sorted(plan.systems):
        problems.append("assignment system list does not match the plan")

    rating_counts = Counter()
    for lid in sorted(assignment.screens):
        screens = assignment.screens[lid]
        if len(screens) != plan.screens_per_listener:
            problems.append(f"{lid}: {len(screens)} screens, "
                            f"expected {plan.screens_per_listener}")
        seen = Counter(s.utterance_id for s in screens)
        for u, c in seen.items():
            if c > 1:
                problems.append(f"{lid}: utterance {u} on {c} screens")
            if u not in domain_of:
                problems.append(f"{lid}: utterance {u} not in plan")
        dom_counts = Counter(domain_of.get(s.utterance_id) for s in screens)
        for d, q in quotas.items():
            if dom_counts.get(d, 0) != q:
                problems.append(f"{lid}: {dom_counts.get(d, 0)} screens in "
                                f"domain {d}, quota is {q}")
        for s in screens:
            if sorted(s.system_order) != sorted(plan.systems):
                problems.append(f"{lid}/{s.utterance_id}: system order "
                                f"{s.system_order} is not a permutation of the "
                                f"plan's systems")
        rating_counts.update(seen)
    for u, _ in plan.utterances:
        c = rating_counts.get(u, 0)
        if c != plan.ratings_per_utterance:
            problems.append(f"utterance {u}: rated {c} times, "
                            f"expected {plan.ratings_per_utterance}")
    return problems


# ---------------------------------------------------------------------------
# plan manifest / assignment files


def load_plan(path, n_listeners, screens_per_listener, ratings_per_utterance,
              seed=0, audio_root=None):
    """Read a plan manifest.

    First non-comment line is the header `utterance domain <system> ...`;
    each row then gives one audio path per system.  Paths are resolved
    relative to the manifest (or audio_root when given).  Returns
    (TestPlan, {(utterance, system): path}).
    """
    base = os.path.abspath(audio_root) if audio_root else \
        os.path.dirname(os.path.abspath(path))
    header = None
    utterances = []
    paths = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if header is None:
                if len(parts) < 3 or parts[0] != "utterance" or parts[1] != "domain":
                    raise DesignError(
                        f"{path}:{lineno}: header must read "
                        f"'utterance domain <system> ...'")
                header = parts[2:]
                continue
            if len(parts) != 2 + len(header):
                raise DesignError(
                    f"{path}:{lineno}: expected {2 + len(header)} columns, "
                    f"got {len(parts)}")
            utt, domain = parts[0], parts[1]
            utterances.append((utt, domain))
            for system, rel in zip(header, parts[2:]):
                paths[(utt, system)] = os.path.join(base, rel)
    if header is None:
        raise DesignError(f"{path}: no header line")
    plan = TestPlan(utterances=utterances, systems=list(header),
                    n_listeners=n_listeners,
                    screens_per_listener=screens_per_listener,
                    ratings_per_utterance=ratings_per_utterance, seed=seed)
    return plan, paths


def write_assignment(path, assignment: Assignment) -> None:
    doc = {
        "seed": assignment.seed,
        "systems": list(assignment.systems),
        "listeners": {
            lid: [{"utterance": s.utterance_id, "order": list(s.system_order)}
                  for s in screens]
            for lid, screens in assignment.screens.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_assignment(path) -> Assignment:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        screens = {
            lid: [Screen(utterance_id=s["utterance"], system_order=list(s["order"]))
                  for s in entries]
            for lid, entries in doc["listeners"].items()
        }
        return Assignment(systems=list(doc["systems"]), screens=screens,
                          seed=int(doc["seed"]))
    except (KeyError, TypeError) as e:
        raise DesignError(f"malformed assignment file {path}: {e}") from e
