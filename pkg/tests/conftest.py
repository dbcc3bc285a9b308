import importlib.util
import sys
from pathlib import Path

import pytest

SCRIPTS_DIR = Path(__file__).resolve().parent.parent / "scripts"
GOLDENS_DIR = Path(__file__).resolve().parent / "goldens"
FIXTURES_DIR = Path(__file__).resolve().parent / "fixtures"


def load_script(name: str):
    """Import a module from scripts/ without requiring it to be a package."""
    if name in sys.modules:
        return sys.modules[name]
    spec = importlib.util.spec_from_file_location(name, SCRIPTS_DIR / f"{name}.py")
    module = importlib.util.module_from_spec(spec)
    sys.modules[name] = module
    spec.loader.exec_module(module)
    return module


@pytest.fixture(scope="session")
def fixture_builder():
    return load_script("build_mini_fixture")


@pytest.fixture(scope="session")
def mini_fixture(tmp_path_factory, fixture_builder):
    """Full fixture tree (databases, splits, vectors, caches, config)."""
    root = tmp_path_factory.mktemp("mini_fixture")
    config_path = fixture_builder.build_all(root)
    return root, config_path


@pytest.fixture(scope="session")
def demo_db(mini_fixture) -> Path:
    return mini_fixture[0] / "db" / "demo.db"


@pytest.fixture(scope="session")
def prompt_db(mini_fixture) -> Path:
    return mini_fixture[0] / "db" / "prompt_fixture.db"


@pytest.fixture(scope="session")
def mini_config_path(mini_fixture) -> Path:
    return mini_fixture[1]


def read_golden(name: str) -> str:
    return (GOLDENS_DIR / name).read_text(encoding="utf-8")
