from __future__ import annotations

import pytest

from toycorpus import make_workspace


@pytest.fixture
def small_ws(tmp_path):
    """Single-target workspace with the three-recipe toy corpus."""
    return make_workspace(tmp_path)


@pytest.fixture
def matrix_ws(tmp_path):
    """2x2x2 workspace matching the end-to-end scenario."""
    return make_workspace(
        tmp_path,
        arches=("aarch64", "x86_64"),
        oses=("linux6", "linux7"),
        sites=("sitea", "siteb"),
        site_env={"sitea": ["SITE_FEATURE=fastnet"]},
        width=4,
    )
