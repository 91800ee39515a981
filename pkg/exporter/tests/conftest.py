import os
import sys
from pathlib import Path

import pytest

# the package under test
sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

# the compression tool is driven only through its CLI; point a subprocess
# environment at its sources
PRIMARY_SRC = Path(__file__).resolve().parents[2] / "src"


@pytest.fixture()
def primary_env():
    env = os.environ.copy()
    env["PYTHONPATH"] = str(PRIMARY_SRC) + os.pathsep + env.get("PYTHONPATH", "")
    return env
