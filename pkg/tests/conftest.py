from __future__ import annotations

import datetime as dt
import threading
from pathlib import Path

import pytest

from metabridge import ojs
from metabridge.oai.core import UTC
from metabridge.oai.provider import ProviderConfig, make_http_server
from metabridge.store import Store

DATA_DIR = Path(__file__).parent / "data"

GOLDEN_OJS = DATA_DIR / "paper_ojs_article.xml"
GOLDEN_ARTICULATUS = DATA_DIR / "paper_articulatus_article.xml"

AFFILIATION = "Санкт-Петербургский государственный университет"


class TickingClock:
    """Injectable clock advancing one second per call."""

    def __init__(self, start: dt.datetime | None = None):
        self.now = start or dt.datetime(2014, 10, 11, 0, 0, 0, tzinfo=UTC)

    def __call__(self) -> dt.datetime:
        self.now += dt.timedelta(seconds=1)
        return self.now


@pytest.fixture
def clock():
    return TickingClock()


@pytest.fixture
def fragment_record():
    """The article from the paper's printed OJS fragment."""
    return ojs.parse_ojs(GOLDEN_OJS.read_bytes()).records[0]


@pytest.fixture
def golden_articulatus_bytes():
    return GOLDEN_ARTICULATUS.read_bytes()


@pytest.fixture
def make_store(tmp_path, clock):
    counter = [0]

    def factory(name: str | None = None, **kwargs) -> Store:
        counter[0] += 1
        directory = tmp_path / (name or f"store{counter[0]}")
        kwargs.setdefault("clock", clock)
        return Store(directory, **kwargs)

    return factory


class LiveProvider:
    def __init__(self, server):
        self.server = server
        host, port = server.server_address[:2]
        self.endpoint = f"http://{host}:{port}/oai"
        self.thread = threading.Thread(target=server.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def live_provider():
    """Factory: spin a real HTTP provider over a store; auto-torn down."""
    started: list[LiveProvider] = []

    def factory(store: Store, **config_kwargs) -> LiveProvider:
        config = ProviderConfig(**config_kwargs)
        provider = LiveProvider(make_http_server(store, config))
        started.append(provider)
        return provider

    yield factory
    for provider in started:
        provider.close()


@pytest.fixture
def fast_fetcher():
    """HTTP fetcher that never sleeps (tests skip politeness/backoff waits)."""
    from metabridge.oai.client import HttpFetcher

    return HttpFetcher(timeout=10.0, sleep=lambda s: None)
