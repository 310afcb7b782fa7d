from __future__ import annotations

import pytest

from fedlink.federation import META_FILE, Federation
from fedlink.governance import load_roles
from fedlink.linkage import build_meta_records
from fedlink.synthgen import GeneratorConfig, generate, write_bundle

SMALL_POPULATION = 2000


@pytest.fixture(scope="session")
def roles():
    return load_roles()


@pytest.fixture(scope="session")
def clean_bundle():
    """Seed-42 population with no quasi-identifier noise (default IHI coverage)."""
    return generate(GeneratorConfig(seed=42, population=SMALL_POPULATION, corruption_rate=0.0))


@pytest.fixture(scope="session")
def clean_meta(clean_bundle):
    return build_meta_records(clean_bundle.datasets)


@pytest.fixture(scope="session")
def clean_fed(clean_bundle, clean_meta):
    return Federation(clean_bundle.datasets, clean_meta)


@pytest.fixture(scope="session")
def clean_dir(tmp_path_factory, clean_bundle, clean_meta):
    """The clean bundle on disk with its meta-record file, as the CLI expects it."""
    out = tmp_path_factory.mktemp("clean")
    write_bundle(clean_bundle, out)
    clean_meta.write_csv(out / META_FILE)
    return out


@pytest.fixture(scope="session")
def noisy_bundle():
    return generate(GeneratorConfig(seed=42, population=SMALL_POPULATION, corruption_rate=0.1))


# -- acceptance reporting ---------------------------------------------------------------------
# Tests marked ``acceptance(n, title)`` roll up into one PASS/FAIL line per criterion.

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): desk-scale acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (report.when != "call" and not report.failed):
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "passed": 0, "failed": []})
    if report.passed:
        entry["passed"] += 1
    elif report.failed:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "FAIL" if e["failed"] else "PASS" if e["passed"] else "NOT RUN"
        detail = f" ({', '.join(e['failed'])})" if e["failed"] else ""
        terminalreporter.write_line(f"criterion {number}: {status}  {e['title']}{detail}")
