from __future__ import annotations

import shutil
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def sample_text() -> str:
    return (FIXTURES / "sample_1kb.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def completed_toy(tmp_path_factory) -> Path:
    """Toy workspace with every pipeline stage already run, shared read-only.

    Tests that mutate the workspace must take their own copy.
    """
    from newsloom.pipeline import PipelineConfig, run

    work = tmp_path_factory.mktemp("completed") / "toy"
    shutil.copytree(FIXTURES / "toy", work)
    run("all", PipelineConfig.load(work / "pipeline.json"))
    return work
