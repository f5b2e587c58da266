import time

import pytest

from affineflow import curves, flow

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def perturbed_heat_run():
    """Fully affine heat flow of the default perturbed ellipse, N=256 up to T=5 (shared, about two minutes)."""
    start = time.perf_counter()
    state = flow.curvature_state(curves.perturbed_ellipse(), 256)
    run = flow.run_heat_flow(state, 5.0, dt_max=0.05, rtol=1e-7, snapshot_times=(0, 1, 2, 3, 4, 5))
    return run, time.perf_counter() - start


@pytest.fixture
def criterion():
    """Record one acceptance line; the test then asserts on the same flag."""
    def record(number: int, ok: bool, detail: str) -> bool:
        _CRITERIA[number] = (bool(ok), detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
