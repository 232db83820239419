import sys
from pathlib import Path

import pytest

from mspde import elliptic, rte

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(autouse=True, scope="module")
def _bounded_solver_caches():
    """Factorization caches are useful within a module, not across them."""
    yield
    rte.clear_cache()
    elliptic.clear_cache()
