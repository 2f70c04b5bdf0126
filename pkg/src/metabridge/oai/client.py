"""OAI-PMH harvester: paged record fetching and incremental store sync.

Fetching is plain HTTP GET with URL-encoded arguments. Transport errors and
HTTP 5xx responses are retried with exponential backoff up to the job's
retry budget (503 Retry-After is honored); in-protocol errors are never
retried. Pages of one job are fetched strictly sequentially because
resumption tokens chain.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator

import requests

from ..errors import NetworkError, ProtocolError
from .. import ojs
from .core import (
    Datestamp,
    DcRecord,
    Granularity,
    Identify,
    ListRecords,
    OaiError,
    OaiErrorCode,
    OaiRecord,
    RecordHeader,
    dc_to_record,
    format_datestamp,
    parse_oai_response,
)

log = logging.getLogger("metabridge.harvest")

USER_AGENT = "metabridge/0.1 (OAI-PMH harvester)"


@dataclass(frozen=True)
class HarvestJob:
    endpoint: str
    metadata_prefix: str = "oai_dc"
    from_date: Datestamp | None = None
    until_date: Datestamp | None = None
    set_spec: str | None = None
    retry_budget: int = 3
    politeness_delay_ms: int = 1000

    def __post_init__(self):
        if self.retry_budget < 0:
            raise ValueError("retry_budget must be >= 0")
        if (self.from_date is not None and self.until_date is not None
                and self.from_date.instant > self.until_date.instant):
            raise ValueError("from_date must not exceed until_date")


@dataclass(frozen=True)
class RepositoryInfo:
    name: str
    base_url: str
    granularity: Granularity
    earliest_datestamp: Datestamp


@dataclass
class HarvestSummary:
    fetched: int = 0
    added: int = 0
    updated: int = 0
    deleted: int = 0
    unchanged: int = 0
    pages: int = 0
    errors: list[str] = field(default_factory=list)

    def line(self) -> str:
        return (f"fetched={self.fetched} added={self.added} updated={self.updated} "
                f"deleted={self.deleted} unchanged={self.unchanged} pages={self.pages} "
                f"errors={len(self.errors)}")


class HttpFetcher:
    """GET with redirects (max 5), retry/backoff and a descriptive UA.

    ``sleep`` is injectable so tests skip real waiting.
    """

    def __init__(self, timeout: float = 30.0, backoff_base_s: float = 0.5,
                 sleep: Callable[[float], None] = time.sleep):
        self.timeout = timeout
        self.backoff_base_s = backoff_base_s
        self.sleep = sleep
        self.session = requests.Session()
        self.session.max_redirects = 5
        self.session.headers["User-Agent"] = USER_AGENT

    def get(self, url: str, params: dict[str, str], retry_budget: int) -> bytes:
        attempt = 0
        while True:
            retryable: str | None = None
            try:
                response = self.session.get(url, params=params, timeout=self.timeout,
                                            allow_redirects=True)
                if response.status_code == 200:
                    return response.content
                if response.status_code == 503:
                    retry_after = response.headers.get("Retry-After")
                    if retry_after is not None and retry_after.isdigit():
                        self.sleep(min(int(retry_after), 30))
                    retryable = "503 service unavailable"
                elif response.status_code >= 500:
                    retryable = f"HTTP {response.status_code}"
                else:
                    raise NetworkError(f"HTTP {response.status_code} from {url}")
            except requests.TooManyRedirects as exc:
                raise NetworkError(f"redirect limit exceeded: {exc}") from exc
            except requests.RequestException as exc:
                retryable = str(exc)
            if attempt >= retry_budget:
                raise NetworkError(f"giving up on {url} after {attempt + 1} attempt(s): {retryable}")
            self.sleep(self.backoff_base_s * (2 ** attempt))
            attempt += 1


def identify(endpoint: str, fetcher: HttpFetcher | None = None,
             retry_budget: int = 3) -> RepositoryInfo:
    """Fetch and type the repository's Identify response."""
    fetcher = fetcher or HttpFetcher()
    body = fetcher.get(endpoint, {"verb": "Identify"}, retry_budget)
    response = parse_oai_response(body)
    payload = response.payload
    if isinstance(payload, OaiError):
        raise ProtocolError(payload.code, payload.message)
    if not isinstance(payload, Identify):
        raise ProtocolError(OaiErrorCode.BAD_VERB, "endpoint did not answer Identify")
    return RepositoryInfo(
        name=payload.repository_name,
        base_url=payload.base_url or endpoint,
        granularity=payload.granularity,
        earliest_datestamp=payload.earliest_datestamp,
    )


def _window_arg(stamp: Datestamp, granularity: Granularity) -> str:
    return format_datestamp(stamp.at_granularity(granularity))


def iter_oai_records(job: HarvestJob, fetcher: HttpFetcher | None = None,
                     granularity: Granularity = Granularity.SECOND) -> Iterator[OaiRecord]:
    """Stream every record in the job's window, following the token chain.

    An empty window (noRecordsMatch) yields nothing. A protocol error mid-
    chain raises ProtocolError after the records already yielded.
    """
    fetcher = fetcher or HttpFetcher()
    params = {"verb": "ListRecords", "metadataPrefix": job.metadata_prefix}
    if job.from_date is not None:
        params["from"] = _window_arg(job.from_date, granularity)
    if job.until_date is not None:
        params["until"] = _window_arg(job.until_date, granularity)
    if job.set_spec is not None:
        params["set"] = job.set_spec

    first = True
    while True:
        if not first and job.politeness_delay_ms:
            fetcher.sleep(job.politeness_delay_ms / 1000.0)
        body = fetcher.get(job.endpoint, params, job.retry_budget)
        response = parse_oai_response(body)
        payload = response.payload
        if isinstance(payload, OaiError):
            if payload.code is OaiErrorCode.NO_RECORDS_MATCH:
                return
            raise ProtocolError(payload.code, payload.message)
        if not isinstance(payload, ListRecords):
            raise ProtocolError(OaiErrorCode.BAD_VERB, "endpoint did not answer ListRecords")
        yield from payload.records
        first = False
        token = payload.resumption_token
        if token is None or token.is_final:
            return
        params = {"verb": "ListRecords", "resumptionToken": token.opaque}


def list_records(job: HarvestJob, fetcher: HttpFetcher | None = None,
                 granularity: Granularity = Granularity.SECOND,
                 ) -> Iterator[tuple[RecordHeader, DcRecord | None]]:
    """The public stream: (header, Dublin Core payload) pairs."""
    for record in iter_oai_records(job, fetcher, granularity):
        yield record.header, record.dc


def harvest_into_store(job: HarvestJob, store, fetcher: HttpFetcher | None = None) -> HarvestSummary:
    """Run one harvest, upserting by identifier.

    Without an explicit ``from_date`` the stored watermark opens the window
    (inclusive; overlap duplicates land as "unchanged"). The watermark
    advances to the highest datestamp seen, but only after a clean run, so
    an aborted harvest is retried in full.
    """
    fetcher = fetcher or HttpFetcher()
    summary = HarvestSummary()
    page_tracker = _PageTracker()
    fetcher_get = fetcher.get
    fetcher.get = page_tracker.wrap(fetcher_get)  # count page requests
    try:
        info = identify(job.endpoint, fetcher, job.retry_budget)
        effective = job
        if job.from_date is None and store.watermark is not None:
            effective = dataclasses.replace(job, from_date=store.watermark)

        max_seen: Datestamp | None = None
        clean = True
        try:
            for oai_record in iter_oai_records(effective, fetcher, info.granularity):
                header = oai_record.header
                summary.fetched += 1
                if header.deleted:
                    outcome = store.mark_deleted(header.identifier, datestamp=header.datestamp)
                    if outcome == "deleted":
                        summary.deleted += 1
                    else:
                        summary.unchanged += 1
                else:
                    record = _to_article_record(job.metadata_prefix, oai_record)
                    outcome = store.upsert(record, datestamp=header.datestamp)
                    if outcome == "added":
                        summary.added += 1
                    elif outcome == "updated":
                        summary.updated += 1
                    else:
                        summary.unchanged += 1
                if max_seen is None or header.datestamp.instant > max_seen.instant:
                    max_seen = header.datestamp
        except (ProtocolError, NetworkError) as exc:
            clean = False
            summary.errors.append(str(exc))
            log.warning("harvest aborted: %s", exc)

        if clean and max_seen is not None:
            store.set_watermark(max_seen)
    finally:
        fetcher.get = fetcher_get
        summary.pages = page_tracker.pages
    return summary


class _PageTracker:
    def __init__(self):
        self.pages = 0

    def wrap(self, get):
        def counted(url, params, retry_budget):
            if params.get("verb") == "ListRecords":
                self.pages += 1
            return get(url, params, retry_budget)
        return counted


def _to_article_record(prefix: str, oai_record: OaiRecord):
    identifier = oai_record.header.identifier
    if prefix == "ojs_native" and oai_record.raw_metadata is not None:
        record = ojs.parse_article(oai_record.raw_metadata)
        return dataclasses.replace(record, identifier=identifier)
    return dc_to_record(identifier, oai_record.dc or DcRecord())
