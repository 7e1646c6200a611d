"""Result assembly: per-contract verdicts, canonical JSON, tables, corpus CSVs and figures.

Everything under the "contracts" key of the JSON payload is deterministic:
two runs of the same tool version over the same sources serialize to the
same bytes regardless of worker count or machine load. Wall-clock numbers
and solver counters live in a separate "timings" section so they never
poison that comparison.
"""

import csv
import json
import logging
import os
from dataclasses import dataclass, field

from . import RULE_VERSIONS, TOOL_VERSION
from .config import DEFECT_KINDS

log = logging.getLogger("nftguard.report")


@dataclass
class ContractVerdict:
    file: str
    contract_name: str
    status: str = "clean"  # clean | defective | partial | error
    reports: list = field(default_factory=list)
    paths: int = 0
    steps: int = 0
    instructions_covered: int = 0
    instructions_total: int = 0
    wall_s: float = 0.0
    solver_queries: int = 0
    error: str | None = None

    @property
    def conclusive(self):
        """Partial and errored runs prove nothing either way."""
        return self.status in ("clean", "defective")

    def kinds(self):
        return sorted({r.kind for r in self.reports})

    def to_dict(self):
        d = {
            "file": self.file,
            "contract": self.contract_name,
            "status": self.status,
            "reports": [r.to_dict() for r in self.reports],
            "stats": {
                "paths": self.paths,
                "steps": self.steps,
                "instructions_covered": self.instructions_covered,
                "instructions_total": self.instructions_total,
            },
        }
        if self.error:
            d["error"] = self.error
        return d


def verdict_from_run(file, unit, outcome, reports, instructions_total):
    """Fold an engine outcome and the checker's reports into one verdict."""
    if outcome.status == "partial":
        status = "partial"
    elif reports:
        status = "defective"
    else:
        status = "clean"
    solver = outcome.solver_stats or {}
    return ContractVerdict(
        file=file,
        contract_name=unit.contract_name,
        status=status,
        reports=list(reports),
        paths=sum(outcome.end_counts.values()),
        steps=outcome.steps_total,
        instructions_covered=outcome.visited_pcs,
        instructions_total=instructions_total,
        wall_s=outcome.wall_s,
        solver_queries=int(solver.get("queries", 0)),
    )


def error_verdict(file, contract_name, exc):
    return ContractVerdict(
        file=file,
        contract_name=contract_name,
        status="error",
        error=f"{type(exc).__name__}: {exc}",
    )


def build_payload(verdicts, compiler_version):
    rows = sorted(verdicts, key=lambda v: (v.file, v.contract_name))
    timings = {}
    for v in rows:
        timings[f"{v.file}:{v.contract_name}"] = {
            "wall_s": round(v.wall_s, 3),
            "solver_queries": v.solver_queries,
        }
    return {
        "tool_version": TOOL_VERSION,
        "rule_versions": dict(RULE_VERSIONS),
        "compiler_version": compiler_version,
        "contracts": [v.to_dict() for v in rows],
        "timings": timings,
    }


def comparable_view(payload):
    """The payload minus its timing section; what determinism tests compare."""
    return {k: v for k, v in payload.items() if k != "timings"}


def render_json(payload):
    # sort_keys + fixed indent means loads() followed by render_json() is
    # byte-identical to the original document.
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_json(payload, path):
    with open(path, "w") as fh:
        fh.write(render_json(payload))
    log.info("wrote %s", path)


_COLS = ("contract", "status", "defects", "paths", "steps", "wall")


def render_table(verdicts):
    """Fixed-width terminal table, one row per contract."""
    rows = []
    for v in sorted(verdicts, key=lambda v: (v.file, v.contract_name)):
        kinds = ",".join(v.kinds()) or "-"
        if v.status == "error":
            kinds = v.error or "error"
        rows.append((v.contract_name, v.status, kinds, str(v.paths),
                     str(v.steps), f"{v.wall_s:.1f}s"))
    widths = [max(len(c), *(len(r[i]) for r in rows)) if rows else len(c)
              for i, c in enumerate(_COLS)]
    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [fmt(_COLS), fmt(["-" * w for w in widths])]
    out.extend(fmt(r) for r in rows)
    return "\n".join(out)


def render_reports(verdict):
    """One line per defect report, for the analyze subcommand."""
    lines = []
    for r in verdict.reports:
        lines.append(
            f"{r.kind} [{r.rule_version}] in {r.contract_name}.{r.function_name}"
            f" at {r.file}:{r.line} (path {r.path_id})"
        )
    return "\n".join(lines)


@dataclass
class CorpusRow:
    """One manifest entry joined with what the analyzer actually found."""
    file: str
    contract: str
    expected: list
    verdict: ContractVerdict

    @property
    def found(self):
        return self.verdict.kinds()

    @property
    def matches(self):
        return self.verdict.conclusive and sorted(self.expected) == self.found


def corpus_metrics(rows):
    """Per-kind precision and recall over the conclusive rows.

    Partial and errored rows are excluded entirely: they are counted as
    neither clean nor defective. An undefined ratio (no positives at all)
    reports as 1.0 rather than poisoning the summary with NaN.
    """
    metrics = []
    usable = [r for r in rows if r.verdict.conclusive]
    for kind in DEFECT_KINDS:
        tp = sum(1 for r in usable if kind in r.expected and kind in r.found)
        fp = sum(1 for r in usable if kind not in r.expected and kind in r.found)
        fn = sum(1 for r in usable if kind in r.expected and kind not in r.found)
        precision = tp / (tp + fp) if tp + fp else 1.0
        recall = tp / (tp + fn) if tp + fn else 1.0
        metrics.append({
            "kind": kind, "tp": tp, "fp": fp, "fn": fn,
            "precision": round(precision, 4), "recall": round(recall, 4),
        })
    return metrics


def write_summary_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["file", "contract", "status", "expected", "found",
                    "match", "paths", "wall_s"])
        for r in sorted(rows, key=lambda r: (r.file, r.contract)):
            w.writerow([
                r.file, r.contract, r.verdict.status,
                "|".join(sorted(r.expected)), "|".join(r.found),
                "yes" if r.matches else "no",
                r.verdict.paths, f"{r.verdict.wall_s:.2f}",
            ])
    log.info("wrote %s", path)


def write_metrics_csv(metrics, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "tp", "fp", "fn", "precision", "recall"])
        for m in metrics:
            w.writerow([m["kind"], m["tp"], m["fp"], m["fn"],
                        m["precision"], m["recall"]])
    log.info("wrote %s", path)


def render_figures(rows, metrics, out_dir):
    """Render the corpus summary as PNGs next to the CSVs. Returns the paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    short = {k: "".join(c for c in k if c.isupper()) for k in DEFECT_KINDS}

    fig, ax = plt.subplots(figsize=(7, 4))
    xs = range(len(DEFECT_KINDS))
    expected = [sum(1 for r in rows if k in r.expected) for k in DEFECT_KINDS]
    found = [sum(1 for r in rows if k in r.found) for k in DEFECT_KINDS]
    ax.bar([x - 0.2 for x in xs], expected, width=0.4, label="labeled")
    ax.bar([x + 0.2 for x in xs], found, width=0.4, label="reported")
    ax.set_xticks(list(xs))
    ax.set_xticklabels([short[k] for k in DEFECT_KINDS])
    ax.set_ylabel("contracts")
    ax.set_title("defects per kind: corpus labels vs reports")
    ax.legend()
    path = os.path.join(out_dir, "defects_by_kind.png")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 0.34 * max(len(rows), 4) + 1.2))
    ordered = sorted(rows, key=lambda r: r.verdict.wall_s)
    names = [r.contract for r in ordered]
    secs = [r.verdict.wall_s for r in ordered]
    colors = ["#4c72b0" if r.matches else "#c44e52" for r in ordered]
    ax.barh(range(len(ordered)), secs, color=colors)
    ax.set_yticks(range(len(ordered)))
    ax.set_yticklabels(names, fontsize=7)
    ax.set_xlabel("analysis wall time (s)")
    ax.set_title("per-contract analysis time (red = manifest mismatch)")
    path = os.path.join(out_dir, "analysis_time.png")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    log.info("wrote %d figures under %s", len(written), out_dir)
    return written
