from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def mnist_dir() -> Path:
    path = REPO_ROOT / "data" / "mnist"
    if not path.is_dir():
        pytest.fail(f"bundled MNIST subset missing at {path}")
    return path
