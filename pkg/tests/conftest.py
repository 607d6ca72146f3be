from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def repo_root() -> Path:
    return REPO_ROOT


@pytest.fixture(scope="session")
def mobilenet_config_path(repo_root) -> Path:
    path = repo_root / "configs" / "mobilenetv3_small_cifar.json"
    assert path.exists(), "bundled config missing; run scripts/make_network_configs.py"
    return path


@pytest.fixture(scope="session")
def toy_config_path(repo_root) -> Path:
    path = repo_root / "configs" / "toy_two_layer.json"
    assert path.exists(), "bundled config missing; run scripts/make_network_configs.py"
    return path
