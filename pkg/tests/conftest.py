import numpy as np
import pytest

from edgecurrent.model import FieldConfig, PotentialSpec
from edgecurrent.spectra import Window, scan_dispersion
from edgecurrent.states import make_wavepacket

SHARP = PotentialSpec("sharp", 100.0)
B1 = FieldConfig(1.0)
WINDOW = Window(0, 1.5, 1.7)
K_SCAN = np.linspace(-3.0, 6.0, 46)


@pytest.fixture(scope="session")
def sharp_table():
    return scan_dispersion(SHARP, B1, K_SCAN, 2)


@pytest.fixture(scope="session")
def sharp_packet(sharp_table):
    return make_wavepacket(sharp_table, WINDOW, "flat")


@pytest.fixture(scope="session")
def sharp_preimage(sharp_table):
    from edgecurrent.spectra import invert_dispersion
    return invert_dispersion(sharp_table, 0, WINDOW)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, ok: bool, detail: str) -> bool:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
