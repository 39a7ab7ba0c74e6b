import pytest

from gcikit.corpus import build_corpus


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    """Small shared corpus for training/CLI tests: 10 bases x 3 shifts."""
    out = tmp_path_factory.mktemp("mini_corpus")
    manifest = build_corpus(10, (0.6, 0.2, 0.2), str(out), master_seed=123,
                            jobs=2, duration_range=(1.0, 1.5))
    return manifest
