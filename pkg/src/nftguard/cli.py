"""Command line front end: analyze one file or sweep a labeled corpus.

Exit codes for `analyze`: 0 when every contract in the file comes back
clean, 1 when at least one is defective, 2 when any contract errored or
was only partially explored (error wins over defective). For `corpus` the
code is 0 on a full manifest match, 1 when any conclusive row diverges
from its label, 2 when rows were inconclusive or the sweep itself failed.
"""

import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import AnalysisConfig, parse_kind_filter
from .defects import DefectChecker
from .disasm import disassemble
from .errors import ManifestMismatch, NFTGuardError
from .ingest.compiler import compile_source
from .ingest.slotmap import build_keyword_index, derive_slot_map
from .report import (
    CorpusRow,
    build_payload,
    corpus_metrics,
    error_verdict,
    render_figures,
    render_json,
    render_reports,
    render_table,
    verdict_from_run,
    write_json,
    write_metrics_csv,
    write_summary_csv,
)
from .sym.engine import run
from .sym.solver import SmtSession

log = logging.getLogger("nftguard.cli")

EXIT_CLEAN = 0
EXIT_DEFECTIVE = 1
EXIT_ERROR = 2


def analyze_path(source_path, config, contract_filter=None, session=None):
    """Compile and analyze every deployable contract in one source file.

    Returns a list of ContractVerdict, one per contract. Failures become
    error verdicts instead of exceptions so a corpus sweep keeps going.
    """
    file = os.path.basename(source_path)
    try:
        units = compile_source(
            source_path,
            solc_version=config.compiler_version,
            contract_filter=contract_filter,
            solc_path=config.resolved_solc(),
        )
    except Exception as exc:
        log.error("%s: %s", source_path, exc)
        return [error_verdict(file, contract_filter or "?", exc)]

    own_session = session is None
    if own_session:
        session = SmtSession(config.resolved_smt(), config.solver_timeout_s)
    verdicts = []
    try:
        for unit in units:
            try:
                slot_map = derive_slot_map(unit.ast, unit.contract_name)
                keyword_index = build_keyword_index(slot_map, config.keywords)
                checker = DefectChecker(unit, slot_map, keyword_index, config, session)
                outcome = run(unit, slot_map, keyword_index, config,
                              session=session, sink=checker)
                reports = checker.aggregate()
                instr_total = len(disassemble(unit.runtime_bytecode))
                verdicts.append(
                    verdict_from_run(file, unit, outcome, reports, instr_total))
            except Exception as exc:
                log.exception("%s %s failed", source_path, unit.contract_name)
                verdicts.append(error_verdict(file, unit.contract_name, exc))
    finally:
        if own_session:
            session.close()
    return verdicts


def analysis_exit_code(verdicts):
    if any(v.status in ("error", "partial") for v in verdicts):
        return EXIT_ERROR
    if any(v.status == "defective" for v in verdicts):
        return EXIT_DEFECTIVE
    return EXIT_CLEAN


# -- corpus -------------------------------------------------------------------

# Worker processes keep one solver session alive across the files they
# handle; results do not depend on which process analyzed which file.
_worker_state = {}


def _init_worker(config_kwargs):
    config = AnalysisConfig(**config_kwargs)
    _worker_state["config"] = config
    _worker_state["session"] = SmtSession(config.resolved_smt(),
                                          config.solver_timeout_s)


def _run_manifest_row(job):
    directory, row = job
    verdicts = analyze_path(
        os.path.join(directory, row["file"]),
        _worker_state["config"],
        contract_filter=row.get("contract"),
        session=_worker_state["session"],
    )
    return verdicts[0]


def load_manifest(path):
    with open(path) as fh:
        manifest = json.load(fh)
    if not isinstance(manifest, list):
        raise ValueError("manifest must be a JSON array")
    for row in manifest:
        if not isinstance(row, dict) or "file" not in row or "kinds" not in row:
            raise ValueError(f"manifest row needs file and kinds: {row!r}")
    return manifest


def run_corpus(directory, manifest, config):
    """Analyze every manifest row; returns CorpusRow list in manifest order."""
    jobs = [(directory, row) for row in manifest]
    if config.worker_count == 1:
        _init_worker(dataclasses.asdict(config))
        try:
            results = [_run_manifest_row(job) for job in jobs]
        finally:
            _worker_state.pop("session").close()
            _worker_state.clear()
    else:
        with ProcessPoolExecutor(
            max_workers=config.worker_count,
            initializer=_init_worker,
            initargs=(dataclasses.asdict(config),),
        ) as pool:
            results = list(pool.map(_run_manifest_row, jobs))
    return [
        CorpusRow(file=row["file"], contract=row.get("contract", v.contract_name),
                  expected=list(row["kinds"]), verdict=v)
        for row, v in zip(manifest, results)
    ]


# -- subcommands --------------------------------------------------------------

def _config_from_args(args):
    return AnalysisConfig(
        solc_path=args.solc,
        smt_path=args.smt,
        timeout_s=args.timeout,
        loop_bound=args.loop_bound,
        depth_limit=args.depth,
        solver_timeout_s=args.solver_timeout,
        only_kinds=parse_kind_filter(args.only) if args.only else
        AnalysisConfig().only_kinds,
        worker_count=getattr(args, "workers", 1),
        json_out=getattr(args, "json_out", None),
    )


def cmd_analyze(args):
    config = _config_from_args(args)
    verdicts = analyze_path(args.source, config, contract_filter=args.contract)
    print(render_table(verdicts))
    for v in verdicts:
        if v.reports:
            print(render_reports(v))
    if config.json_out:
        write_json(build_payload(verdicts, config.compiler_version),
                   config.json_out)
    return analysis_exit_code(verdicts)


def cmd_corpus(args):
    config = _config_from_args(args)
    manifest = load_manifest(args.manifest)
    rows = run_corpus(args.directory, manifest, config)
    metrics = corpus_metrics(rows)

    print(render_table([r.verdict for r in rows]))
    for m in metrics:
        print(f"{m['kind']}: precision {m['precision']:.2f} "
              f"recall {m['recall']:.2f} (tp={m['tp']} fp={m['fp']} fn={m['fn']})")

    if args.report_dir:
        os.makedirs(args.report_dir, exist_ok=True)
        payload = build_payload([r.verdict for r in rows],
                                config.compiler_version)
        write_json(payload, os.path.join(args.report_dir, "report.json"))
        write_summary_csv(rows, os.path.join(args.report_dir, "summary.csv"))
        write_metrics_csv(metrics, os.path.join(args.report_dir, "metrics.csv"))
        render_figures(rows, metrics, args.report_dir)

    inconclusive = [r for r in rows if not r.verdict.conclusive]
    divergent = [r for r in rows if r.verdict.conclusive and not r.matches]
    if divergent:
        lines = [
            f"{r.file}:{r.contract} expected {sorted(r.expected)} found {r.found}"
            for r in divergent
        ]
        raise ManifestMismatch("\n".join(lines))
    if inconclusive:
        for r in inconclusive:
            log.warning("%s:%s inconclusive (%s)", r.file, r.contract,
                        r.verdict.status)
        return EXIT_ERROR
    return EXIT_CLEAN


def _shared_flags(p):
    p.add_argument("--solc", help="solc binary (default: $NFTG_SOLC or PATH)")
    p.add_argument("--smt", help="SMT solver binary (default: $NFTG_SMT or bundled)")
    p.add_argument("--timeout", type=float, default=600.0,
                   help="per-contract exploration budget in seconds")
    p.add_argument("--loop-bound", type=int, default=10,
                   help="max forked revisits of one block on a path")
    p.add_argument("--depth", type=int, default=200,
                   help="max branch decisions on a path")
    p.add_argument("--solver-timeout", type=float, default=10.0,
                   help="per-query solver budget in seconds")
    p.add_argument("--only",
                   help="restrict to a comma list of kinds (names or RMP,ER,UM,MR,PB)")


def build_parser():
    p = argparse.ArgumentParser(
        prog="nftguard",
        description="Find five ERC-721 defect classes by symbolic execution.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="analyze one Solidity source file")
    a.add_argument("source")
    a.add_argument("--contract", help="only this contract from the file")
    _shared_flags(a)
    a.add_argument("--json", dest="json_out", help="write the JSON report here")

    c = sub.add_parser("corpus",
                       help="analyze a directory of labeled contracts")
    c.add_argument("directory")
    c.add_argument("--manifest", required=True,
                   help="JSON array of {file, contract, kinds} ground truth")
    c.add_argument("--report-dir",
                   help="write report.json, CSVs and figures here")
    c.add_argument("--workers", type=int, default=1)
    _shared_flags(c)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "analyze":
            return cmd_analyze(args)
        return cmd_corpus(args)
    except ManifestMismatch as exc:
        print(f"manifest mismatch:\n{exc}", file=sys.stderr)
        return EXIT_DEFECTIVE
    except NFTGuardError as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
