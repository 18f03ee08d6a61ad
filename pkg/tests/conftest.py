import numpy as np
import pytest

from warpflow.warp import WarpFunction, build_transform

CATALOG = {
    "sphere-sine": WarpFunction("sphere-sine", (0.3, 2.8)),
    "hyperbolic-sinh": WarpFunction("hyperbolic-sinh", (0.5, 2.0)),
    "euclidean-identity": WarpFunction("euclidean-identity", (1.0, 2.0)),
    "cosh": WarpFunction("cosh", (-1.0, 1.0)),
    "constant": WarpFunction("constant", (-1.0, 1.0), (2.0,)),
    "even-polynomial": WarpFunction("even-polynomial", (-1.0, 1.0), (1.0, 0.5, 0.1)),
}


@pytest.fixture(scope="session")
def catalog():
    return CATALOG


@pytest.fixture(scope="session")
def transforms():
    return {name: build_transform(w) for name, w in CATALOG.items()}


@pytest.fixture(scope="session")
def cosh_transform():
    return build_transform(WarpFunction("cosh", (-1.0, 1.0)), base=0.0)


@pytest.fixture(scope="session")
def blowup_search(cosh_transform):
    from warpflow.blowup import choose_params
    return choose_params(0.25, 1.0, cosh_transform)


def smooth_random(rng, modes=4, amplitude=0.1, mean=0.0):
    a = rng.standard_normal((2, modes)) * amplitude / np.arange(1, modes + 1) ** 2

    def f(theta):
        m = np.arange(1, modes + 1)[:, None]
        th = np.asarray(theta)[None, :]
        return mean + (a[0][:, None] * np.cos(m * th) + a[1][:, None] * np.sin(m * th)).sum(axis=0)
    return f


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record (and print) the PASS/FAIL line of an acceptance criterion."""
    def say(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok
    return say


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
