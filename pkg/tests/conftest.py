"""Shared fixtures: rendered standard suite, an on-disk corpus, and the
acceptance-criteria summary printed after each run."""

import re

import numpy as np
import pytest

from mstrack.synthgen import generate, render_sequence, standard_suite

_CRITERION = re.compile(r"test_(A\d+)_")
_verdicts = {}


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    m = _CRITERION.search(report.nodeid)
    if m:
        _verdicts[m.group(1)] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_verdicts):
        verdict = "PASS" if _verdicts[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{name}: {verdict}")


@pytest.fixture(scope="session")
def suite_specs():
    return standard_suite(0)


@pytest.fixture(scope="session")
def rendered_suite(suite_specs):
    """ident -> (float frames, int masks, per-frame box-or-None for label 1)."""
    out = {}
    for spec in suite_specs:
        triples = render_sequence(spec)
        out[spec.ident] = (
            [t[0].astype(np.float32) / 255.0 for t in triples],
            [t[1] for t in triples],
            [t[2].get(1) for t in triples],
        )
    return out


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory, suite_specs):
    root = tmp_path_factory.mktemp("corpus")
    for spec in suite_specs:
        generate(spec, root)
    return root
