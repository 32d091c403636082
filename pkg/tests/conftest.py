import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scalefree.wavelet import build_wavelet


@pytest.fixture(scope="session")
def db3():
    return build_wavelet(3)


@pytest.fixture(scope="session")
def haar():
    return build_wavelet(1)
