import numpy as np

from dyncal.simulators import Simulator, SimulatorSpec

ACCEPTANCE_LINES = []


def record_acceptance(line: str):
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_toy_simulator(L=40, d=2):
    """Cheap smooth dynamic simulator for unit tests, inputs on [0,1]^d."""

    def func(x, t):
        t = np.asarray(t, dtype=float)
        out = np.exp(x[0] * t) * np.cos(4.0 * x[1] * t + 1.0)
        for k in range(2, len(x)):
            out = out + 0.3 * x[k] * t ** (k - 1)
        return out

    spec = SimulatorSpec(name="toy", d=d, L=L,
                         time_grid=np.linspace(0.0, 1.0, L),
                         native_bounds=[(0.0, 1.0)] * d)
    return Simulator(spec, func)
