import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("kmv", max_examples=40, deadline=None)
settings.load_profile("kmv")


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


def random_unitary(rng, n, complex_=True):
    A = rng.standard_normal((n, n))
    if complex_:
        A = A + 1j * rng.standard_normal((n, n))
    Q, R = np.linalg.qr(A)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def circle_mats(M=256, alpha=0.7, K=5):
    """EDMD matrices of the circle rotation with a Fourier dictionary at equispaced nodes."""
    from kmv.data import SnapshotPair
    from kmv.dictionaries import assemble, fourier_dictionary

    theta = 2 * np.pi * np.arange(M) / M
    return assemble(SnapshotPair(theta[None, :], (theta + alpha)[None, :]), fourier_dictionary(K))


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {k:2d}: {detail}")
