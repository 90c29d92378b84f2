"""Shared fixtures: the 500-design built-in-solver corpus and models trained on it."""

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))  # make ``oracles`` importable

from latentfoil.framework import ActiveLearningConfig, train_models  # noqa: E402
from latentfoil.sampling import DesignSpace, build_dataset, lhs_sample, split_dataset  # noqa: E402
from latentfoil.solver import BuiltinSolver, FlowConditions  # noqa: E402

MASTER_SEED = 0


@pytest.fixture(scope="session")
def builtin_corpus():
    """500 LHS designs over the default design space, evaluated at the default conditions."""
    solver = BuiltinSolver()
    ds = build_dataset(lhs_sample(DesignSpace(), 500, seed=MASTER_SEED), solver,
                       FlowConditions(), seed=MASTER_SEED)
    split_dataset(ds, 0.8, seed=MASTER_SEED)
    return ds


@pytest.fixture(scope="session")
def builtin_models(builtin_corpus):
    """First-iteration VAE and regressor at the full training budget (several minutes)."""
    return train_models(builtin_corpus, ActiveLearningConfig(seed=MASTER_SEED), 1)


# ---------------------------------------------------------------- acceptance summary

_OUTCOMES = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_OUTCOMES] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and not rep.skipped and rep.passed):
        return
    status = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if rep.skipped and isinstance(rep.longrepr, tuple):
        detail = rep.longrepr[2].removeprefix("Skipped: ")
    item.config.stash[_OUTCOMES][marker.args[0]] = (status, detail)


def pytest_terminal_summary(terminalreporter, config):
    outcomes = config.stash.get(_OUTCOMES, {})
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(outcomes):
        status, detail = outcomes[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {detail}".rstrip())
