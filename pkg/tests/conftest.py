import pytest


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Acceptance tests print their PASS line themselves; emit the FAIL
    counterpart here so every criterion always reports one line."""
    outcome = yield
    report = outcome.get_result()
    if (
        report.when == "call"
        and report.failed
        and "test_acceptance" in item.nodeid
    ):
        name = item.name
        digits = "".join(ch for ch in name.split("_")[1] if ch.isdigit())
        if digits:
            print(f"\nACCEPTANCE {int(digits):02d} FAIL  {name}")
