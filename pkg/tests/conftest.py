import time

import pytest

from stabledeblur.harness import load_config, run_experiment

# (number, title, passed, detail, seconds) filled in by test_acceptance
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, passed, detail, secs in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {num:2d}: {title} ({secs:.1f}s) -- {detail}")


def _timed_run(cfg):
    t0 = time.perf_counter()
    res = run_experiment(cfg)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def experiment_a(tmp_path_factory):
    """Desk-scale Experiment A with the default configuration."""
    out = tmp_path_factory.mktemp("experiment_a")
    cfg = load_config(overrides=[f"output.dir={out}", "experiment.kind=A"])
    res, secs = _timed_run(cfg)
    return cfg, res, secs


@pytest.fixture(scope="session")
def experiment_b(tmp_path_factory):
    """Desk-scale Experiment B: noise injection at 0.025, tested at half and three times that."""
    out = tmp_path_factory.mktemp("experiment_b")
    cfg = load_config(overrides=[f"output.dir={out}", "experiment.kind=B", "noise.train_sigma=0.025",
                                 "noise.test_sigmas=0.0125,0.075"])
    res, secs = _timed_run(cfg)
    return cfg, res, secs
