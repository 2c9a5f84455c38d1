import importlib

import numpy as np
import pytest

from cmpgraph import _pykernels


def _available_backends():
    mods = [("python", _pykernels)]
    try:
        mods.append(("cython", importlib.import_module("cmpgraph._ckernels")))
    except ImportError:
        pass
    return mods


BACKENDS = _available_backends()


@pytest.fixture(params=[m for _, m in BACKENDS], ids=[n for n, _ in BACKENDS])
def kernels(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_cohort():
    """Two short subjects; enough contexts for every detector to train."""
    from cmpgraph import synth
    spec = synth.CohortSpec(n_subjects=2, n_days=120, episodes_per_subject=2, warmup_days=20,
                            seed=3)
    return spec, *synth.generate_cohort(spec)


@pytest.fixture(scope="session")
def small_stream(small_cohort):
    from cmpgraph import cmp, graphs, ingest
    spec, streams, truths = small_cohort
    sid = truths[0].subject_id
    ev = ingest.dedupe(streams[sid], 60)
    fm = ingest.extract_features(ev, spec.locations, spec.n_days, spec.origin)
    cmps = cmp.compute_cmp(fm.values, fm.feature_names, cmp.CmpConfig())
    return cmps, graphs.build_stream(cmps, 2), truths[0]


_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; call with (number, passed, detail)."""
    table = request.config.stash.setdefault(_CRITERIA, {})

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {detail}"
        table[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(_CRITERIA, {})
    if table:
        terminalreporter.section("acceptance criteria")
        for n in sorted(table):
            terminalreporter.write_line(table[n])
