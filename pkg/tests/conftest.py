import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.mdp.instances import single_action_mdp, two_state_demo  # noqa: E402
from src.mdp.model import Policy, induce_policy  # noqa: E402

DEMO_DIR = project_root / "data" / "demo"


def induce_single(mdp):
    """Induced chain of the only policy of a one-action MDP."""
    return induce_policy(mdp, Policy.deterministic(np.zeros(mdp.n, dtype=int), 1))


@pytest.fixture
def two_state():
    """Uniform 2-state chain, R = (1, 0), gamma = 0.9."""
    return two_state_demo(0.9)


@pytest.fixture
def two_state_ind(two_state):
    return induce_single(two_state)


@pytest.fixture
def biased_ind():
    """P = [[0.9, 0.1], [0.2, 0.8]] with stationary distribution (2/3, 1/3)."""
    return induce_single(single_action_mdp([[0.9, 0.1], [0.2, 0.8]], [1.0, 0.0], 0.9))


@pytest.fixture
def demo_dir():
    return DEMO_DIR
