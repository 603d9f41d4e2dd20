import pytest

from stopdur.runner import SimulationRunner
from stopdur.schemas import SimulationReport


@pytest.fixture
def runner():
    return SimulationRunner(threads=2)


@pytest.fixture
def within_std_errors():
    def check(report: SimulationReport, reference: float, width: float = 4.0) -> None:
        gap = abs(report.mean - reference)
        assert gap <= width * report.std_error, (
            f"{report.model}: mean={report.mean:.8g} reference={reference:.8g} "
            f"std_error={report.std_error:.3g} z={gap / report.std_error:.2f}"
        )

    return check
