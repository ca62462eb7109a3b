import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

from tissuepheno.cli import main


@pytest.fixture(scope="session")
def small_fixture(tmp_path_factory):
    """Twelve 4x4-tile synthetic slides with a clinical table and run.cfg."""
    root = tmp_path_factory.mktemp("fixture")
    assert main(["synth", "--out", str(root), "--slides", "12", "--grid", "4x4", "--seed", "1"]) == 0
    return root
