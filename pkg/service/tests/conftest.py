import pytest
from fastapi.testclient import TestClient

from neural_scorer.app import Settings, create_app


@pytest.fixture(scope="session")
def settings(tmp_path_factory):
    s = Settings()
    s.embed_model = "hash:384"
    s.bertscore_model = "hash:384"
    s.max_batch = 64
    s.baseline = 0.0
    return s


@pytest.fixture(scope="session")
def client(settings):
    return TestClient(create_app(settings))
