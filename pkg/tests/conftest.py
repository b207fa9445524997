import os

import numpy as np
import pandas as pd
import pytest

from sgc.model import header_lines, write_csv

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def pytest_addoption(parser):
    parser.addoption(
        "--regen-golden",
        action="store_true",
        default=False,
        help="Rewrite the baseline CSVs under tests/golden from this run.",
    )


class Golden:
    """Baseline CSVs kept under tests/golden, written with sgc.model.write_csv."""

    def __init__(self, regen: bool) -> None:
        self.regen = regen

    @staticmethod
    def path(name: str) -> str:
        return os.path.join(GOLDEN_DIR, name)

    def load(self, name: str):
        path = self.path(name)
        if not os.path.exists(path):
            pytest.skip("{} is missing; run pytest --regen-golden once".format(path))
        with open(path) as f:
            header = [line.rstrip("\n") for line in f if line.startswith("#")]
        return header, pd.read_csv(path, skiprows=len(header))

    def check(self, name: str, frame: pd.DataFrame, header, rtol: float = 1e-9) -> pd.DataFrame:
        """Compare frame with the stored baseline (after rewriting it if asked)."""
        if self.regen:
            os.makedirs(GOLDEN_DIR, exist_ok=True)
            write_csv(self.path(name), frame, header)
        stored_header, stored = self.load(name)
        assert stored_header == header_lines(header)
        assert list(stored.columns) == list(frame.columns)
        for column in frame.columns:
            np.testing.assert_allclose(
                frame[column].to_numpy(dtype=float), stored[column].to_numpy(dtype=float),
                rtol=rtol, atol=0,
            )
        return stored


@pytest.fixture
def golden(request):
    return Golden(request.config.getoption("--regen-golden"))
