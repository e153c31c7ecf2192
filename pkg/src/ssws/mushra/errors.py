"""Speech-error flags: closed category/severity sets and count aggregations."""

from __future__ import annotations

import csv
from dataclasses import dataclass

CATEGORIES = (
    "audio glitch",
    "incorrect pause insertion",
    "incorrect pitch accent",
    "intonation/prosody",
    "pronunciation",
    "stress",
    "text normalisation",
    "other",
)
SEVERITIES = ("critical", "medium", "minor")


class FlagError(RuntimeError):
    pass


@dataclass(frozen=True)
class ErrorFlag:
    utterance_id: str
    system_id: str
    category: str
    severity: str
    annotator_id: str
    note: str = ""

    def __post_init__(self):
        cat = self.category.strip().lower()
        sev = self.severity.strip().lower()
        if cat not in CATEGORIES:
            raise FlagError(f"unknown error category {self.category!r}; "
                            f"must be one of {list(CATEGORIES)}")
        if sev not in SEVERITIES:
            raise FlagError(f"unknown severity {self.severity!r}; "
                            f"must be one of {list(SEVERITIES)}")
        object.__setattr__(self, "category", cat)
        object.__setattr__(self, "severity", sev)


def _zero_grid():
    return {c: {s: 0 for s in SEVERITIES} for c in CATEGORIES}


def aggregate_by_system(flags, systems=None) -> dict:
    """counts[system][category][severity]; full grid kept (zero rows included)."""
    table = {s: _zero_grid() for s in (systems or [])}
    for f in flags:
        table.setdefault(f.system_id, _zero_grid())
        table[f.system_id][f.category][f.severity] += 1
    return table


def aggregate_by_domain(flags, utterance_domains, category, system_id) -> dict:
    """counts[domain][severity] for one system's flags in one category.

    utterance_domains maps every flaggable utterance to its domain; a flag
    whose utterance is missing from the map is an error.
    """
    category = category.strip().lower()
    if category not in CATEGORIES:
        raise FlagError(f"unknown error category {category!r}")
    table = {d: {s: 0 for s in SEVERITIES}
             for d in dict.fromkeys(utterance_domains.values())}
    for f in flags:
        if f.utterance_id not in utterance_domains:
            raise FlagError(f"flag references utterance {f.utterance_id!r} "
                            f"with no known domain")
        if f.system_id != system_id or f.category != category:
            continue
        table[utterance_domains[f.utterance_id]][f.severity] += 1
    return table


def format_system_table(table) -> str:
    lines = [f"{'system':<12}{'category':<28}{'critical':>9}{'medium':>8}{'minor':>7}"]
    for system in sorted(table):
        for cat in CATEGORIES:
            row = table[system][cat]
            lines.append(f"{system:<12}{cat:<28}{row['critical']:>9}"
                         f"{row['medium']:>8}{row['minor']:>7}")
    return "\n".join(lines) + "\n"


def format_domain_table(table) -> str:
    lines = [f"{'domain':<18}{'critical':>9}{'medium':>8}{'minor':>7}"]
    for domain, row in table.items():
        lines.append(f"{domain:<18}{row['critical']:>9}{row['medium']:>8}"
                     f"{row['minor']:>7}")
    return "\n".join(lines) + "\n"


FLAGS_CSV_COLUMNS = ["annotator", "utterance", "system", "category",
                     "severity", "note"]


def write_flags_csv(path, flags) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(FLAGS_CSV_COLUMNS)
        for f in flags:
            writer.writerow([f.annotator_id, f.utterance_id, f.system_id,
                             f.category, f.severity, f.note])


def read_flags_csv(path) -> list:
    flags = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(FLAGS_CSV_COLUMNS[:5]).issubset(
                reader.fieldnames):
            raise FlagError(f"{path}: flags CSV must have columns {FLAGS_CSV_COLUMNS}")
        for row in reader:
            flags.append(ErrorFlag(
                utterance_id=row["utterance"], system_id=row["system"],
                category=row["category"], severity=row["severity"],
                annotator_id=row["annotator"], note=row.get("note", "")))
    return flags
