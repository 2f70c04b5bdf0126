"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s``.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import random
import time
import xml.etree.ElementTree as ET

import pytest
import requests

from metabridge import articulatus, ojs, template
from metabridge.model import (
    ArticleRecord,
    GalleyFile,
    LocalizedText,
    validate_for_indexing,
)
from metabridge.oai.client import HarvestJob, harvest_into_store, list_records
from metabridge.oai.core import (
    Datestamp,
    Granularity,
    OaiErrorCode,
    UTC,
    format_datestamp,
    parse_datestamp,
    parse_oai_response,
)
from metabridge.oai.provider import emit_rss
from metabridge.store import Store

from conftest import AFFILIATION, GOLDEN_ARTICULATUS, GOLDEN_OJS, TickingClock
from genrecords import project_articulatus, project_template, random_record


def _texts(root: ET.Element, path: str) -> list[str]:
    return [el.text or "" for el in root.findall(path)]


def test_criterion_1_golden_crosswalk():
    """Converting the reconstructed OJS fragment reproduces the printed
    Articulatus fragment on every mapped field, in under a second."""
    started = time.monotonic()
    options = articulatus.CrosswalkOptions(default_affiliation=AFFILIATION)
    report = articulatus.CrosswalkReport()
    converted = articulatus.crosswalk_ojs_to_neb(
        GOLDEN_OJS.read_bytes(), options=options, report=report)
    elapsed = time.monotonic() - started

    emitted = ET.fromstring(converted)
    golden = ET.fromstring(GOLDEN_ARTICULATUS.read_bytes())
    mapped_fields = [
        "authors/author/individInfo/surname",
        "authors/author/individInfo/initials",
        "authors/author/individInfo/orgName",
        "artTitles/artTitle",
        "abstracts/abstract",
        "pages",
        "artType",
    ]
    for path in mapped_fields:
        assert _texts(emitted, path) == _texts(golden, path), f"field mismatch at {path}"
    assert [el.get("lang") for el in emitted.findall("artTitles/artTitle")] == ["RUS", "ENG"]
    assert [el.get("lang") for el in emitted.findall("abstracts/abstract")] == ["RUS", "ENG"]
    # keywords have no Articulatus counterpart: dropped and accounted for
    assert "subjects (RUS): 3 dropped" in report.dropped
    assert elapsed < 1.0, f"golden crosswalk took {elapsed:.3f}s"
    print(f"\n[acceptance] criterion 1 PASS: golden crosswalk ({elapsed * 1000:.0f} ms)")


def test_criterion_2_round_trip_suite():
    """1,000 randomized records survive emit->parse for each codec with
    field-level equality, zero failures, in under 60 s."""
    started = time.monotonic()
    rng = random.Random(20141011)
    failures = 0
    for i in range(1000):
        record = random_record(rng, i)

        if ojs.parse_article(ojs.emit_article(record)) != record:
            failures += 1

        articulatus_subset = project_articulatus(record)
        if articulatus.parse_articulatus(
                articulatus.emit_articulatus([articulatus_subset])) != [articulatus_subset]:
            failures += 1

        template_subset = project_template(record)
        if template.parse_template(template.render_template(template_subset)) != template_subset:
            failures += 1

    elapsed = time.monotonic() - started
    assert failures == 0
    assert elapsed < 60.0, f"round-trip suite took {elapsed:.1f}s"
    print(f"\n[acceptance] criterion 2 PASS: 1000-record round trips x3 codecs ({elapsed:.1f} s)")


def test_criterion_3_oai_loopback(make_store, live_provider, fast_fetcher):
    """53 records at page_size=10 harvest as exactly 53 identifiers over
    exactly 6 pages; the identifier set is page-size independent; an
    incremental re-harvest after one touch fetches exactly one record."""
    started = time.monotonic()
    source = make_store()
    for i in range(53):
        source.upsert(ArticleRecord(identifier=f"rec-{i:03d}",
                                    titles=LocalizedText.of(ru=f"Статья {i}")))

    provider10 = live_provider(source, page_size=10)
    pages = [0]
    original_get = fast_fetcher.get

    def counting(url, params, budget):
        if params.get("verb") == "ListRecords":
            pages[0] += 1
        return original_get(url, params, budget)

    fast_fetcher.get = counting
    job = HarvestJob(endpoint=provider10.endpoint, politeness_delay_ms=0)
    harvested = [h.identifier for h, _ in list_records(job, fast_fetcher)]
    fast_fetcher.get = original_get
    assert len(harvested) == 53
    assert len(set(harvested)) == 53
    assert pages[0] == 6

    expected = set(harvested)
    for page_size in (1, 7, 53, 100):
        provider = live_provider(source, page_size=page_size)
        job = HarvestJob(endpoint=provider.endpoint, politeness_delay_ms=0)
        assert {h.identifier for h, _ in list_records(job, fast_fetcher)} == expected, \
            f"page size {page_size} changed the harvested set"

    # incremental: harvest into a store, touch the newest record, re-harvest
    target = make_store()
    harvest_into_store(HarvestJob(endpoint=provider10.endpoint, politeness_delay_ms=0),
                       target, fast_fetcher)
    assert len(target.list()) == 53
    touched = dataclasses.replace(source.get("rec-052"),
                                  titles=LocalizedText.of(ru="Исправлено"))
    source.upsert(touched)
    summary = harvest_into_store(HarvestJob(endpoint=provider10.endpoint,
                                            politeness_delay_ms=0),
                                 target, fast_fetcher)
    assert summary.fetched == 1, f"incremental run fetched {summary.fetched}"
    assert summary.updated == 1

    elapsed = time.monotonic() - started
    assert elapsed < 30.0, f"loopback took {elapsed:.1f}s"
    print(f"\n[acceptance] criterion 3 PASS: loopback harvest ({elapsed:.1f} s)")


def test_criterion_4_protocol_error_conformance(make_store, live_provider):
    """Six scripted requests produce the six protocol errors; each response
    is well-formed XML and parses into the matching typed error."""
    store = make_store()
    for i in range(3):
        store.upsert(ArticleRecord(identifier=f"rec-{i}",
                                   titles=LocalizedText.of(ru=f"Статья {i}")))
    provider = live_provider(store, page_size=10)

    def ask(params, endpoint=None) -> bytes:
        response = requests.get(endpoint or provider.endpoint, params=params, timeout=10)
        assert response.status_code == 200
        return response.content

    # stale fingerprint: mint a token from a size-1 provider, change the
    # record set, then present the token to the same provider again
    provider1 = live_provider(store, page_size=1)
    first_page = parse_oai_response(
        ask({"verb": "ListRecords", "metadataPrefix": "oai_dc"}, provider1.endpoint))
    token = first_page.payload.resumption_token.opaque
    store.upsert(ArticleRecord(identifier="intruder", titles=LocalizedText.of(ru="Новая")))

    scripted = [
        (OaiErrorCode.BAD_VERB, {"verb": "Frobnicate"}, None),
        (OaiErrorCode.BAD_ARGUMENT, {"verb": "Identify", "pineapple": "yes"}, None),
        (OaiErrorCode.BAD_RESUMPTION_TOKEN,
         {"verb": "ListRecords", "resumptionToken": token}, provider1.endpoint),
        (OaiErrorCode.ID_DOES_NOT_EXIST,
         {"verb": "GetRecord", "identifier": "no-such", "metadataPrefix": "oai_dc"}, None),
        (OaiErrorCode.CANNOT_DISSEMINATE_FORMAT,
         {"verb": "ListRecords", "metadataPrefix": "marc21"}, None),
        (OaiErrorCode.NO_RECORDS_MATCH,
         {"verb": "ListRecords", "metadataPrefix": "oai_dc",
          "from": "2030-01-01", "until": "2030-01-02"}, None),
    ]
    for expected_code, params, endpoint in scripted:
        body = ask(params, endpoint)
        ET.fromstring(body)  # well-formed
        response = parse_oai_response(body)
        assert response.error is not None, f"no error for {params}"
        assert response.error.code is expected_code, \
            f"{params} gave {response.error.code}, wanted {expected_code}"
    print("\n[acceptance] criterion 4 PASS: six protocol errors typed and well-formed")


def test_criterion_5_datestamp_law():
    """parse∘format identity over 10,000 random stamps in both
    granularities; comparison agrees with the brute-force instant oracle."""
    rng = random.Random(5)
    stamps = []
    for _ in range(10_000):
        instant = dt.datetime(1950, 1, 1, tzinfo=UTC) + dt.timedelta(
            seconds=rng.randrange(4_000_000_000))
        granularity = Granularity.DAY if rng.random() < 0.5 else Granularity.SECOND
        stamp = Datestamp(instant, granularity)
        stamps.append(stamp)
        assert parse_datestamp(format_datestamp(stamp)) == stamp

    for _ in range(10_000):
        a, b = rng.choice(stamps), rng.choice(stamps)
        oracle = (a.instant > b.instant) - (a.instant < b.instant)
        assert a.compare(b) == oracle
        assert (a < b) == (oracle < 0)
    print("\n[acceptance] criterion 5 PASS: 10,000-stamp parse/format identity and ordering")


def test_criterion_6_indexing_validator(fragment_record):
    """The fragment record validates clean; deleting any one of the four
    required facets fires exactly the corresponding error."""
    assert validate_for_indexing(fragment_record).errors() == []

    mutations = {
        "no-title": dataclasses.replace(fragment_record, titles=LocalizedText()),
        "no-author": dataclasses.replace(fragment_record, authors=()),
        "no-pages-or-date": dataclasses.replace(fragment_record, pages=None),
        "no-fulltext": dataclasses.replace(fragment_record, galleys=()),
    }
    for expected_code, mutated in mutations.items():
        codes = [f.code for f in validate_for_indexing(mutated).errors()]
        assert codes == [expected_code], \
            f"mutation for {expected_code} produced {codes}"
    print("\n[acceptance] criterion 6 PASS: validator clean on fragment, 1 mutation -> 1 error")


def test_criterion_7_store_crash_safety(tmp_path):
    """Killing an upsert at every write step leaves a store that reopens
    cleanly as exactly the pre- or post-upsert state."""

    class SimulatedCrash(Exception):
        pass

    def crashing_at(step_name):
        def hook(step):
            if step == step_name:
                raise SimulatedCrash(step)
        return hook

    def snapshot(store):
        headers = store.list()
        return ([(h.identifier, h.datestamp, h.deleted) for h in headers],
                {h.identifier: store.get(h.identifier) for h in headers},
                store.watermark)

    base = ArticleRecord(
        identifier="rec-1", titles=LocalizedText.of(ru="Первая версия"),
        galleys=(GalleyFile("PDF", "a.pdf", "application/pdf", b"v1"),))
    updated = dataclasses.replace(
        base, titles=LocalizedText.of(ru="Вторая версия"),
        galleys=(GalleyFile("PDF", "a.pdf", "application/pdf", b"v2"),))

    reference = Store(tmp_path / "reference", clock=TickingClock())
    reference.upsert(base)
    pre = snapshot(reference)
    reference.upsert(updated)
    post = snapshot(reference)

    steps = ["write-record", "rename-record", "write-galley-dir", "write-galley",
             "write-manifest", "rename-manifest", "cleanup"]
    for step in steps:
        victim_dir = tmp_path / f"victim-{step}"
        victim = Store(victim_dir, clock=TickingClock())
        victim.upsert(base)
        victim.fault_hook = crashing_at(step)
        with pytest.raises(SimulatedCrash):
            victim.upsert(updated)
        recovered = Store(victim_dir, clock=TickingClock())
        state = snapshot(recovered)
        assert state == pre or state == post, f"mixed state after crash at {step}"
    print(f"\n[acceptance] criterion 7 PASS: pre-or-post state at all "
          f"{len(steps)} fault points")


def test_criterion_8_rss_feed(make_store):
    """A five-record store feeds min(limit, 5) items in strictly descending
    pubDate order, verified against an independent sort oracle."""
    import email.utils

    store = make_store()
    for i in range(5):
        store.upsert(ArticleRecord(identifier=f"rec-{i}",
                                   titles=LocalizedText.of(ru=f"Статья {i}")))
    stamps = {h.identifier: h.datestamp for h in store.list()}
    assert len({s.instant for s in stamps.values()}) == 5  # distinct datestamps

    for limit in (3, 5, 10):
        feed = ET.fromstring(emit_rss(store, limit=limit))
        items = feed.findall("channel/item")
        assert len(items) == min(limit, 5)
        pub_dates = [email.utils.parsedate_to_datetime(item.findtext("pubDate"))
                     for item in items]
        assert all(a > b for a, b in zip(pub_dates, pub_dates[1:])), \
            "pubDates not strictly descending"
        # independent oracle: sort headers by instant, newest first
        oracle = sorted(stamps.values(), key=lambda s: s.instant, reverse=True)
        expected = [s.instant for s in oracle[:limit]]
        assert [d for d in pub_dates] == expected
    print("\n[acceptance] criterion 8 PASS: RSS ordering matches the sort oracle")
