"""Shared fixtures: the three benchmark scans are expensive enough that
every test module reuses one session-scoped run of each."""

import time
from types import SimpleNamespace

import numpy as np
import pytest

import gpeigen as g


def _scan_and_refine(problem, refine_top=None):
    t0 = time.perf_counter()
    scan = g.scan_spectrum(problem)
    scan_seconds = time.perf_counter() - t0
    peaks = g.detect_peaks(scan, prominence_decades=2.0)
    n = len(scan.points)
    if refine_top is None:
        chosen = set(range(len(peaks)))
    else:
        by_height = sorted(range(len(peaks)), key=lambda i: -peaks[i].J_peak)
        chosen = set(by_height[:refine_top])
    refined = [
        g.refine_peak(problem, p, iterations=20)
        if i in chosen and 0 < p.grid_index < n - 1
        else p
        for i, p in enumerate(peaks)
    ]
    return SimpleNamespace(
        problem=problem,
        scan=scan,
        peaks=peaks,
        refined=refined,
        scan_seconds=scan_seconds,
    )


@pytest.fixture(scope="session")
def laplace_desk():
    return _scan_and_refine(g.laplace_dirichlet())


@pytest.fixture(scope="session")
def laplace_paper():
    # The full-size run is slow on one core, so only the dominant peaks
    # get golden-section refinement; the rest stay at grid resolution.
    return _scan_and_refine(g.laplace_dirichlet(scale="paper"), refine_top=6)


@pytest.fixture(scope="session")
def cantilever_desk():
    return _scan_and_refine(g.cantilever())


@pytest.fixture(scope="session")
def loaded_string_desk():
    return _scan_and_refine(g.loaded_string())


@pytest.fixture(scope="session")
def theorem_report():
    return g.fd_theorem_suite(trials=100, max_dim=8, seed=0)


def match_references(refined, refs, rel_tol):
    """Map each refined peak to its nearest reference value.

    Returns (matched, unmatched) where matched maps reference index to the
    best peak record and unmatched lists peaks farther than rel_tol from
    every reference.
    """
    refs = np.asarray(refs, dtype=float)
    matched = {}
    unmatched = []
    for p in refined:
        rel = np.abs(refs - p.lam_hat) / refs
        k = int(np.argmin(rel))
        if rel[k] <= rel_tol:
            cur = matched.get(k)
            if cur is None or abs(cur.lam_hat - refs[k]) > abs(p.lam_hat - refs[k]):
                matched[k] = p
        else:
            unmatched.append(p)
    return matched, unmatched
