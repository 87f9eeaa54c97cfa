import numpy as np
import pytest

from fnpcast.model import FittedModel, Hyperparams, init_params, zero_params

FIXTURES = __import__("pathlib").Path(__file__).parent / "fixtures"


def numeric_grad(f, x, eps=1e-5):
    """Central finite differences of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        hi = f(x)
        x[i] = old - eps
        lo = f(x)
        x[i] = old
        g[i] = (hi - lo) / (2 * eps)
    return g


def rel_err(a, b, floor=1e-7):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fixtures():
    return FIXTURES


def small_model(hidden=6, seed=0, refs=None, **hp):
    hp = Hyperparams(hidden_size=hidden, seed=seed, **hp)
    refs = refs if refs is not None else [np.linspace(0, 1, 8), np.linspace(1, 0, 10), np.ones(9)]
    return FittedModel(init_params(np.random.default_rng(seed), hidden), hp, refs,
                       [str(i) for i in range(len(refs))])


def zero_model(hidden=4, **hp):
    hp = Hyperparams(hidden_size=hidden, **hp)
    return FittedModel(zero_params(hidden), hp, [np.arange(5.0), np.arange(6.0)], ["a", "b"])


ACCEPTANCE_LINES = []


@pytest.fixture
def report(capsys):
    """Print one PASS/FAIL line immediately and repeat it in the terminal summary."""
    def emit(criterion, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  {criterion}" + (f"  ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line, flush=True)
        return passed
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
