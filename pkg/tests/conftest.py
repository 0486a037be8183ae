import numpy as np
import pytest

from taylorattr.model import Activation, DenseLayer, Network
from taylorattr.numeric import RngState
from taylorattr.poly import Polynomial


def random_network(rng: RngState, n: int, widths=(4,), activation="tanh", scale=1.0) -> Network:
    """Dense net ``n -> widths... -> 1`` with a linear output layer."""
    dims = [n, *widths, 1]
    layers = []
    for k, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        w = rng.uniform(a * b, -scale, scale).reshape(b, a)
        bias = rng.uniform(b, -0.5, 0.5)
        act = Activation.IDENTITY if k == len(dims) - 2 else Activation(activation)
        layers.append(DenseLayer(w, bias, act))
    return Network(tuple(layers))


@pytest.fixture
def x1x2():
    return Polynomial.parse("x1*x2", n=2)


@pytest.fixture
def x1sq_x2():
    return Polynomial.parse("x1^2*x2", n=2)


@pytest.fixture
def rng():
    return RngState(12345)


def assert_close(a, b, atol=1e-12):
    np.testing.assert_allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=0, atol=atol)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(label: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def record_info(detail: str) -> None:
    line = f"INFO  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
