import numpy as np
import pytest

from horloop.config import make_rng
from horloop.models import (contact_s3, contact_t3, flat_line_redundant,
                            flat_torus, heisenberg, heisenberg_redundant,
                            round_s2)


@pytest.fixture(scope="session")
def all_models():
    return [heisenberg(1), heisenberg(2), flat_torus(2), contact_t3(),
            round_s2(), contact_s3()]


@pytest.fixture
def rng():
    return make_rng(20240811)
