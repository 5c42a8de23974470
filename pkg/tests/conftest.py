import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so timed tests measure the algorithm."""
    import adn

    spec = adn.SyntheticSpec(d=8, n=12, density=0.8, seed=0, task="classification")
    matrix, labels, _ = adn.generate_synthetic(spec)
    problem = adn.ProblemSpec(adn.SmoothLoss.logistic(labels),
                              adn.Regularizer.l2(0.1))
    part = adn.partition_columns(matrix.n_cols, 2, "contiguous")
    adn.run_adn(problem, matrix, part, adn.TrustConfig(),
                adn.SolverBudget(2, seed=0), adn.StopCriteria(2))
    for reg in (adn.Regularizer.l1(0.1), adn.Regularizer.elastic_net(0.1, 0.1),
                adn.Regularizer.box_entropy_dual()):
        adn.prox_g(reg, 0.3, 1.0)
        adn.g_conj(reg, 0.3)
        adn.g_conj_subgrad(reg, 0.3)
