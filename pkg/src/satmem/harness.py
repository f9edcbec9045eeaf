"""Compile-and-run helpers, the corpus runner and JSON reports."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

from .instrument import Mode, PassConfig, instrument
from .interp import DEFAULT_STEP_BUDGET, ExecOutcome, Exited, Segfault, Trapped, run
from .ir import Program, parse

MANIFEST_NAME = "manifest.json"
ALL_MODES = (Mode.SATURATE, Mode.FAILSTOP, Mode.OBLIVIOUS, Mode.OFF)


class Verdict(enum.Enum):
    BLOCKED = "Blocked"
    SUCCEEDED = "Succeeded"
    NOT_APPLICABLE = "NotApplicable"


class Category(enum.Enum):
    BENIGN = "Benign"
    OVERFLOW_WRITE = "OverflowWrite"
    OVERFLOW_READ = "OverflowRead"
    UNDERFLOW = "Underflow"
    ADJACENT_CORRUPTION = "AdjacentCorruption"
    SUB_OBJECT = "SubObject"
    TOLERANCE = "Tolerance"

    @property
    def is_attack(self) -> bool:
        return self not in (Category.BENIGN, Category.TOLERANCE)


def status_name(outcome: ExecOutcome) -> str:
    return type(outcome.status).__name__


def compile_and_run(source: str | Program, cfg: PassConfig, input: bytes = b"", *,
                    step_budget: int = DEFAULT_STEP_BUDGET, write_hook=None) -> ExecOutcome:
    program = parse(source) if isinstance(source, str) else source
    return run(instrument(program, cfg).program, cfg, input,
               step_budget=step_budget, write_hook=write_hook)


# -- success predicates -----------------------------------------------------


def evaluate_predicate(predicate: dict, outcome: ExecOutcome) -> bool:
    """Evaluate a manifest success predicate against a finished run.

    Supported forms: ``{"output_contains": text}``,
    ``{"output_contains_hex": hex}``,
    ``{"global_byte": {"global": name, "offset": n, "equals": byte}}``,
    and ``{"all": [...]}`` / ``{"any": [...]}`` combinations.
    """
    if "all" in predicate:
        return all(evaluate_predicate(p, outcome) for p in predicate["all"])
    if "any" in predicate:
        return any(evaluate_predicate(p, outcome) for p in predicate["any"])
    if "output_contains" in predicate:
        return predicate["output_contains"].encode() in outcome.output
    if "output_contains_hex" in predicate:
        return bytes.fromhex(predicate["output_contains_hex"]) in outcome.output
    if "global_byte" in predicate:
        target = predicate["global_byte"]
        base = outcome.global_addrs.get(target["global"])
        if base is None or outcome.space is None:
            return False
        return outcome.space.read(base + target.get("offset", 0), 1) == target["equals"]
    raise ValueError(f"unknown predicate {predicate!r}")


# -- reports ----------------------------------------------------------------


@dataclass
class RunReport:
    program: str
    cfg: PassConfig
    outcome: ExecOutcome
    verdict: Verdict = Verdict.NOT_APPLICABLE
    include_stats: bool = True
    category: Category | None = None

    def to_dict(self) -> dict:
        doc = {
            "program": self.program,
            "mode": self.cfg.mode.value,
            "codec": self.cfg.codec.value,
            "address_tagging": self.cfg.address_tagging,
            "status": status_name(self.outcome),
            "exit_code": self.outcome.exit_code,
            "stats": self.outcome.stats.to_dict() if self.include_stats else None,
            "fragmentation": self.outcome.fragmentation.to_dict(),
            "verdict": self.verdict.value,
        }
        if self.category is not None:
            doc["category"] = self.category.value
        return doc


def emit_report(reports) -> str:
    """Serialize a run report, a list of them, or a corpus report to JSON text."""
    if isinstance(reports, CorpusReport):
        doc = reports.to_dict()
    elif isinstance(reports, RunReport):
        doc = reports.to_dict()
    else:
        doc = [r.to_dict() for r in reports]
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# -- corpus -----------------------------------------------------------------


@dataclass
class CorpusEntry:
    path: Path
    category: Category
    success: dict | None = None
    description: str = ""
    input: bytes = b""
    expect: dict[str, list[str]] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.path.stem


def load_manifest(directory: str | Path) -> list[CorpusEntry]:
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if not manifest.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {directory}")
    doc = json.loads(manifest.read_text())
    entries = []
    for item in doc["entries"]:
        data = item.get("input", "")
        raw = bytes.fromhex(item["input_hex"]) if "input_hex" in item else data.encode()
        expect = {mode: ([v] if isinstance(v, str) else list(v))
                  for mode, v in item.get("expect", {}).items()}
        entries.append(CorpusEntry(directory / item["path"], Category(item["category"]),
                                   item.get("success"), item.get("description", ""), raw, expect))
    return entries


def run_entry(entry: CorpusEntry, cfg: PassConfig, *, step_budget: int = DEFAULT_STEP_BUDGET) -> RunReport:
    outcome = compile_and_run(entry.path.read_text(), cfg, entry.input, step_budget=step_budget)
    verdict = Verdict.NOT_APPLICABLE
    if entry.category.is_attack:
        hit = evaluate_predicate(entry.success, outcome)
        verdict = Verdict.SUCCEEDED if hit else Verdict.BLOCKED
    return RunReport(entry.name, cfg, outcome, verdict, category=entry.category)


def expectation_failures(entry: CorpusEntry, report: RunReport) -> list[str]:
    wanted = entry.expect.get(report.cfg.mode.value, [])
    observed = {report.verdict.value, status_name(report.outcome)}
    return [f"{entry.name} [{report.cfg.mode.value}]: expected {w}, observed {sorted(observed)}"
            for w in wanted if w not in observed]


@dataclass
class CorpusReport:
    entries: list[tuple[CorpusEntry, RunReport]]

    def for_mode(self, mode: Mode) -> list[tuple[CorpusEntry, RunReport]]:
        return [(e, r) for e, r in self.entries if r.cfg.mode is mode]

    def block_rate(self, mode: Mode) -> float | None:
        attacks = [r for e, r in self.for_mode(mode)
                   if e.category.is_attack and e.category is not Category.SUB_OBJECT]
        if not attacks:
            return None
        return sum(r.verdict is Verdict.BLOCKED for r in attacks) / len(attacks)

    def subobject_succeeded(self, mode: Mode) -> list[str]:
        return [e.name for e, r in self.for_mode(mode)
                if e.category is Category.SUB_OBJECT and r.verdict is Verdict.SUCCEEDED]

    def tolerance_completion_rate(self, mode: Mode) -> float | None:
        runs = [r for e, r in self.for_mode(mode) if e.category is Category.TOLERANCE]
        if not runs:
            return None
        return sum(isinstance(r.outcome.status, Exited) for r in runs) / len(runs)

    def failures(self) -> list[str]:
        out = []
        for entry, report in self.entries:
            out += expectation_failures(entry, report)
        return out

    def to_dict(self) -> dict:
        modes = []
        for _, r in self.entries:
            if r.cfg.mode not in modes:
                modes.append(r.cfg.mode)
        return {
            "entries": [r.to_dict() for _, r in self.entries],
            "aggregate": {
                "block_rate": {m.value: self.block_rate(m) for m in modes},
                "subobject_succeeded": {m.value: self.subobject_succeeded(m) for m in modes},
                "tolerance_completion_rate": {m.value: self.tolerance_completion_rate(m) for m in modes},
                "expectation_failures": self.failures(),
            },
        }


def run_corpus(directory: str | Path, modes=ALL_MODES, *, codec="buddy",
               address_tagging: bool = False, step_budget: int = DEFAULT_STEP_BUDGET) -> CorpusReport:
    """Run every manifest entry under every requested mode."""
    entries = load_manifest(directory)
    results = []
    for entry in entries:
        for mode in modes:
            cfg = PassConfig(mode=mode, codec=codec, address_tagging=address_tagging)
            results.append((entry, run_entry(entry, cfg, step_budget=step_budget)))
    return CorpusReport(results)


def default_corpus_dir() -> Path:
    return Path(__file__).parent / "corpus"


__all__ = [
    "ALL_MODES", "Category", "CorpusEntry", "CorpusReport", "RunReport", "Verdict",
    "compile_and_run", "default_corpus_dir", "emit_report", "evaluate_predicate",
    "expectation_failures", "load_manifest", "run_corpus", "run_entry", "status_name",
    "Exited", "Trapped", "Segfault",
]
