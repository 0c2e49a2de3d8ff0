import numpy as np
import pytest

from chaindesign.model import pack, unpack


def random_pd(rng, k, jitter=0.5):
    a = rng.standard_normal((k, k))
    return a @ a.T / k + jitter * np.eye(k)


def central_hessian(f, x, h=1e-5):
    """Central finite-difference Hessian of a scalar function."""
    m = x.size
    out = np.empty((m, m))
    eye = np.eye(m) * h
    for i in range(m):
        for j in range(i, m):
            ei, ej = eye[i], eye[j]
            v = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
            out[i, j] = out[j, i] = v
    return out


def central_gradient(f, x, h=1e-6):
    eye = np.eye(x.size) * h
    return np.array([(f(x + e) - f(x - e)) / (2 * h) for e in eye])


def param_fn(f, k, p):
    """Wrap ``f(params)`` as a function of the packed coordinate vector."""
    return lambda theta: f(unpack(theta, k, p))


@pytest.fixture
def rng():
    return np.random.default_rng(42)


__all__ = ["random_pd", "central_hessian", "central_gradient", "param_fn", "pack", "record_acceptance"]


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
