import hashlib
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))  # for the oracles package

from nftguard.config import AnalysisConfig
from nftguard.defects import DefectChecker
from nftguard.ingest.compiler import find_solc, compile_source
from nftguard.ingest.slotmap import build_keyword_index, derive_slot_map
from nftguard.sym.engine import run as run_engine
from nftguard.sym.solver import SmtSession

_compile_cache = {}


@pytest.fixture(scope="session")
def solc_exe():
    return find_solc()


@pytest.fixture(scope="session")
def compile_units(tmp_path_factory, solc_exe):
    """Session-cached compile helper: source text -> list of CompilationUnit."""
    src_dir = tmp_path_factory.mktemp("solsrc")

    def _compile(source_text, contract_filter=None, file_name=None):
        key = (hashlib.sha256(source_text.encode()).hexdigest(), contract_filter, file_name)
        if key not in _compile_cache:
            name = file_name or f"c{key[0][:16]}.sol"
            path = src_dir / name
            if not path.exists():
                path.write_text(source_text)
            _compile_cache[key] = compile_source(
                str(path), contract_filter=contract_filter, solc_path=solc_exe)
        return _compile_cache[key]

    return _compile


FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture(scope="session")
def fixture_dir():
    return FIXTURE_DIR


@pytest.fixture(scope="session")
def smt_session():
    session = SmtSession(os.environ.get("NFTG_SMT"), 10.0)
    yield session
    session.close()


_analysis_cache = {}


@pytest.fixture(scope="session")
def analyze_source(compile_units, smt_session):
    """Full pipeline over inline source text; returns (unit, outcome, reports).

    Results are cached per (source, contract, config) so the defect and
    acceptance tests can share one engine run per fixture.
    """

    def _run(source_text, contract=None, file_name=None, **overrides):
        key = (hashlib.sha256(source_text.encode()).hexdigest(), contract,
               file_name, tuple(sorted(overrides.items())))
        if key not in _analysis_cache:
            config = AnalysisConfig(**{"timeout_s": 120.0, **overrides})
            unit = compile_units(source_text, contract, file_name)[0]
            slot_map = derive_slot_map(unit.ast, unit.contract_name)
            keyword_index = build_keyword_index(slot_map, config.keywords)
            checker = DefectChecker(unit, slot_map, keyword_index, config,
                                    smt_session)
            outcome = run_engine(unit, slot_map, keyword_index, config,
                                 session=smt_session, sink=checker)
            _analysis_cache[key] = (unit, outcome, checker.aggregate())
        return _analysis_cache[key]

    return _run


@pytest.fixture(scope="session")
def analyze_fixture(analyze_source):
    """Same pipeline, keyed by a file under tests/fixtures."""

    def _run(file_name, contract=None, **overrides):
        with open(os.path.join(FIXTURE_DIR, file_name)) as fh:
            text = fh.read()
        return analyze_source(text, contract=contract, file_name=file_name,
                              **overrides)

    return _run
