import numpy as np
import pytest
import scipy.sparse as sp


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_spd(rng, n, density=0.1, shift=1.0):
    G = sp.random(n, n, density=density, random_state=rng, format="csr")
    return sp.csr_matrix(G @ G.T + shift * sp.identity(n))


@pytest.fixture
def spd_factory(rng):
    return lambda n, **kw: random_spd(rng, n, **kw)


_ACCEPTANCE = []


@pytest.fixture
def acceptance_report(request):
    """Return ``report(cid, ok, detail)``; lines are echoed live and in the summary."""
    terminal = request.config.pluginmanager.get_plugin("terminalreporter")

    def report(cid, ok, detail):
        line = f"CRITERION {cid}: {'PASS' if ok else 'FAIL'} | {detail}"
        _ACCEPTANCE.append(line)
        if terminal is not None:
            terminal.write_line("")
            terminal.write_line(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
