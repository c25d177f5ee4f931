import functools
import math
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from heterotopy import maps as _maps
from heterotopy.energy import p_energy
from heterotopy.mesh import build_flat_torus, build_icosphere
from heterotopy.topology import ENERGY_QUANTUM, brouwer_degree, check_amgm_bound

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


# ---------------------------------------------------------------------------
# lower-bound chain on every field the suite produces

CHAIN = {"fields": 0, "quantum_checked": 0, "violations": [], "seconds": 0.0}

_orig_post_init = _maps.VertexField.__post_init__


def _checked_post_init(self):
    _orig_post_init(self)
    start = time.perf_counter()
    try:
        _check_chain(self)
    finally:
        CHAIN["seconds"] += time.perf_counter() - start


def _check_chain(self):
    CHAIN["fields"] += 1
    amgm = check_amgm_bound(self)
    if not amgm.ok:
        CHAIN["violations"].append(f"AM-GM slack {amgm.min_slack:.3e}")
        raise AssertionError(f"per-triangle AM-GM violated (slack {amgm.min_slack:.3e})")
    deg = brouwer_degree(self)
    if deg.reliable and deg.snapped != 0:
        CHAIN["quantum_checked"] += 1
        energy = p_energy(self).total
        if ENERGY_QUANTUM * abs(deg.snapped) > energy * 1.01:
            msg = f"8pi|{deg.snapped}| > 1.01 E = {1.01 * energy:.6g}"
            CHAIN["violations"].append(msg)
            raise AssertionError(msg)


_maps.VertexField.__post_init__ = _checked_post_init


class LibraryTimer:
    """Wall time of a block minus the time spent in the chain instrumentation."""

    def __enter__(self):
        self._hook = CHAIN["seconds"]
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        wall = time.perf_counter() - self._start
        self.seconds = wall - (CHAIN["seconds"] - self._hook)
        return False


# ---------------------------------------------------------------------------
# acceptance reporting

ACCEPTANCE = {}


def record_acceptance(number: int, passed: bool, detail: str):
    ACCEPTANCE[number] = (passed, detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            passed, detail = ACCEPTANCE[number]
            terminalreporter.write_line(
                f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
    terminalreporter.section("lower-bound chain")
    terminalreporter.write_line(
        f"fields checked: {CHAIN['fields']}, quantum bound checked on "
        f"{CHAIN['quantum_checked']} reliable nonzero-degree fields, "
        f"violations: {len(CHAIN['violations'])}, instrumentation time {CHAIN['seconds']:.1f} s")


# ---------------------------------------------------------------------------
# shared meshes


@functools.lru_cache(maxsize=None)
def ico(level):
    return build_icosphere(level)


@functools.lru_cache(maxsize=None)
def torus(n):
    return build_flat_torus(n)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


def relerr(a, b):
    return abs(a - b) / abs(b)


QUANTUM = 8 * math.pi
