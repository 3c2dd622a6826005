from pathlib import Path

import pytest

from trikey.layout import Layout, load_layout

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def example_layout() -> Layout:
    """The four-file reference layout for a 150-lemma stop class."""
    return load_layout(DATA / "layout_ws150.txt", ws_count=150)


@pytest.fixture(scope="session")
def example_layout_path() -> Path:
    return DATA / "layout_ws150.txt"
