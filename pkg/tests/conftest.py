import numpy as np
import pytest


def central_diff(f, params: dict[str, np.ndarray], h: float = 1e-5) -> dict[str, np.ndarray]:
    """Central finite differences of scalar ``f(params)`` for every entry."""
    out = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            plus = {k: v.copy() for k, v in params.items()}
            minus = {k: v.copy() for k, v in params.items()}
            plus[name][idx] += h
            minus[name][idx] -= h
            g[idx] = (f(plus) - f(minus)) / (2 * h)
        out[name] = g
    return out


def assert_grads_close(analytic, numeric, rel=1e-4, abs_small=1e-6):
    for name in numeric:
        a, n = analytic[name], numeric[name]
        small = np.abs(a) < 1e-8
        assert np.all(np.abs(a[small] - n[small]) < abs_small), name
        big = ~small
        err = np.abs(a[big] - n[big]) / np.maximum(np.abs(a[big]), np.abs(n[big]))
        assert np.all(err < rel), (name, err.max() if err.size else 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criterion results, printed once at the end of the session
ACCEPTANCE: list[tuple[int, bool, str]] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((number, passed, detail))
    print(f"\ncriterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
