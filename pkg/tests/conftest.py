import hypothesis
import pytest

hypothesis.settings.register_profile(
    "liftreach", deadline=None, max_examples=100, derandomize=True
)
hypothesis.settings.load_profile("liftreach")


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    outcome = "PASS" if report.passed else "FAIL"
    print(f"\n[ACCEPTANCE] {name}: {outcome}", flush=True)
