import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sipseg.imgcore import SyntheticEyeSpec, render_synthetic_eye


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def clean_eye():
    """Noise-free eye with no specular spots."""
    return render_synthetic_eye(SyntheticEyeSpec(), seed=0)


@pytest.fixture
def noisy_eye():
    spec = SyntheticEyeSpec(noise_variance=0.002, reflections=((70.0, 58.0, 2.5),), eyelash_count=6)
    return render_synthetic_eye(spec, seed=7)
