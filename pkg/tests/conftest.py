import pytest


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """One visible pass/fail line per acceptance criterion."""
    outcome = yield
    report = outcome.get_result()
    if report.when != "call" or "test_acceptance" not in str(item.fspath):
        return
    label = item.function.__doc__ or item.name
    label = label.strip().splitlines()[0]
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[acceptance] {status}: {label}", flush=True)
