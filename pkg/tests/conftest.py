import os
from pathlib import Path

import pytest

from sgdkit import DATA_DIR
from sgdkit.schema import load_schemas
from sgdkit.services import load_entities, load_value_pools
from sgdkit.simulator import generate_corpus, load_automaton, load_templates

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def bundled():
    schemas = load_schemas(DATA_DIR)
    tables = load_entities(DATA_DIR / "entities", schemas)
    pools = load_value_pools(DATA_DIR / "entities")
    return {
        "schemas": schemas,
        "tables": tables,
        "pools": pools,
        "automaton": load_automaton(),
        "templates": load_templates(),
    }


@pytest.fixture(scope="session")
def sim_corpus(bundled):
    b = bundled
    return generate_corpus(b["schemas"], b["tables"], b["automaton"], b["templates"], 100, 2024, pools=b["pools"]).dialogues


def sgd_data_dir() -> Path | None:
    """Location of the released dataset (directory with train/dev/test), if provided."""
    value = os.environ.get("SGD_DATA_DIR")
    return Path(value) if value and Path(value).is_dir() else None


ACCEPTANCE: dict[str, tuple[str, str]] = {}


def record(criterion: str, ok: bool, detail: str = "") -> None:
    """Note one acceptance result; printed at the end of the run and asserted by the caller."""
    ACCEPTANCE[criterion] = ("PASS" if ok else "FAIL", detail)
    print(f"acceptance {criterion}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_runtest_logreport(report):
    if report.skipped and "test_acceptance" in report.nodeid and report.when in ("setup", "call"):
        name = report.nodeid.rsplit("::", 1)[-1]
        ACCEPTANCE.setdefault(name, ("SKIP", str(report.longrepr[-1]) if isinstance(report.longrepr, tuple) else ""))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{status:<5} {name} {detail}")
