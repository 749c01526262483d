import os

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

import time

ACCEPTANCE = {}  # criterion number -> (passed, detail)
_START = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    elapsed = time.perf_counter() - _START
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        tr.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
    tr.write_line(f"suite runtime {elapsed:.1f} s ({'within' if elapsed < 300 else 'OVER'} the 5 minute budget)")
