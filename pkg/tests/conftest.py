import numpy as np
import pytest

from colombeau.epsnet import EpsGrid, GenNumber
from colombeau.genpoly import GenPolynomial


@pytest.fixture(scope="session")
def grid() -> EpsGrid:
    return EpsGrid.default()


def make_poly(grid: EpsGrid, dim: int, coeffs: dict) -> GenPolynomial:
    gen = {
        a: (v if isinstance(v, GenNumber) else GenNumber.constant(complex(v), grid))
        for a, v in coeffs.items()
    }
    return GenPolynomial(dim, max(sum(a) for a in gen), gen, grid)
