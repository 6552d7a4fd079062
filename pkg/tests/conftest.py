import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from censcov.cox import CensoredData

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_dataset(rng, n=40, p=1, censor_rate=0.7, ties=False):
    """Exponential-ish covariate times with Cox effects and exponential censoring."""
    z = rng.normal(size=(n, p)) if p else np.zeros((n, 0))
    lam = np.linspace(0.5, -0.5, p) if p else np.zeros(0)
    x = rng.exponential(1.0, n) * np.exp(-z @ lam)
    c = rng.exponential(1.0 / censor_rate, n)
    w = np.minimum(x, c)
    if ties:
        w = np.round(w, 1) + 0.1
    delta = (x <= c).astype(np.int8)
    if not delta.any():
        delta[np.argmin(w)] = 1
    y = 1.0 + 0.5 * x + rng.normal(size=n)
    return CensoredData(y, w, delta, z)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = {}


@pytest.fixture
def verdict(capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    def record(number, title, checks):
        ok = all(passed for passed, _ in checks)
        ACCEPTANCE[number] = (title, ok)
        with capsys.disabled():
            print(f"\nACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}: {title}")
            for passed, detail in checks:
                print(f"    [{'ok' if passed else 'XX'}] {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok = ACCEPTANCE[number]
        terminalreporter.write_line(f"{number:>2} {'PASS' if ok else 'FAIL'}  {title}")
