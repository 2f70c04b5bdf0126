"""File-backed persistence of canonical records.

Layout::

    <dir>/manifest.tsv            index: identifier, datestamp, D|A, path
    <dir>/records/<id>.xml        canonical single-article OJS XML
    <dir>/galleys/<id>/<file>     galley payload bytes, decoded

The manifest is the single commit point: every mutation writes new payload
files first (updates go to a fresh generation-suffixed path), then replaces
the manifest atomically via temp-file + rename, then cleans the superseded
files. A crash at any step leaves a store that reopens as exactly the pre-
or post-mutation state; reopening sweeps temp files and uncommitted
generations. An optional ``#watermark`` header line persists the harvest
high-watermark.

Single writer, many readers: an advisory lock file serializes mutations,
readers work from per-call manifest snapshots. The clock is injectable so
tests control datestamps; stamps per identifier are strictly increasing.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from filelock import FileLock

from . import ojs
from .errors import MetabridgeError, StoreRead, StoreWrite
from .model import ArticleRecord, GalleyFile
from .oai.core import Datestamp, Granularity, RecordHeader, UTC, format_datestamp, parse_datestamp

_GEN_RE = re.compile(r"^records/(?P<base>.+?)(?:\.g(?P<gen>\d+))?\.xml$")
_SANITIZE_RE = re.compile(r"[^A-Za-z0-9._-]")


def _utcnow() -> dt.datetime:
    return dt.datetime.now(UTC)


@dataclass
class _Entry:
    identifier: str
    datestamp: Datestamp
    deleted: bool
    path: str  # store-relative record path, "-" for tombstones


@dataclass
class _Manifest:
    entries: dict[str, _Entry]
    watermark: Datestamp | None = None


class Store:
    """A record store rooted at ``path`` (created if missing)."""

    def __init__(
        self,
        path: str | Path,
        clock: Callable[[], dt.datetime] = _utcnow,
        fault_hook: Callable[[str], None] | None = None,
    ):
        self.path = Path(path)
        self.clock = clock
        self.fault_hook = fault_hook
        self.path.mkdir(parents=True, exist_ok=True)
        (self.path / "records").mkdir(exist_ok=True)
        (self.path / "galleys").mkdir(exist_ok=True)
        self._lock = FileLock(str(self.path / ".lock"))
        with self._lock:
            self._recover()

    # -- reading -----------------------------------------------------------

    def list(self, from_: Datestamp | None = None,
             until: Datestamp | None = None) -> list[RecordHeader]:
        """Headers (tombstones included) in the inclusive datestamp window,
        ordered by (datestamp, identifier)."""
        manifest = self._load()
        out = []
        for entry in manifest.entries.values():
            if from_ is not None and entry.datestamp.instant < from_.instant:
                continue
            if until is not None and entry.datestamp.instant > until.window_end():
                continue
            out.append(RecordHeader(entry.identifier, entry.datestamp, (), entry.deleted))
        out.sort(key=lambda h: (h.datestamp.instant, h.identifier))
        return out

    def header(self, identifier: str) -> RecordHeader | None:
        entry = self._load().entries.get(identifier)
        if entry is None:
            return None
        return RecordHeader(entry.identifier, entry.datestamp, (), entry.deleted)

    def get(self, identifier: str) -> ArticleRecord | None:
        """The stored record, or None when absent or tombstoned."""
        entry = self._load().entries.get(identifier)
        if entry is None or entry.deleted:
            return None
        return self._read_record(entry)

    @property
    def watermark(self) -> Datestamp | None:
        return self._load().watermark

    # -- writing -----------------------------------------------------------

    def upsert(self, record: ArticleRecord, datestamp: Datestamp | None = None) -> str:
        """Insert or update; returns "added", "updated" or "unchanged".

        Content-equal records are left untouched, datestamp included. The
        datestamp comes from the injected clock unless given explicitly
        (harvests pass the remote stamp through).
        """
        if not record.identifier:
            raise ValueError("record identifier must be non-empty")
        if record.deleted:
            raise ValueError("use mark_deleted for tombstones")
        _check_identifier(record.identifier)

        with self._lock:
            manifest = self._load()
            old = manifest.entries.get(record.identifier)
            if old is not None and not old.deleted:
                if self._read_record(old) == record:
                    return "unchanged"
            stamp = self._next_stamp(old, datestamp)
            path = self._allocate_path(manifest, record.identifier, old)

            stripped = dataclasses.replace(record, galleys=tuple(
                dataclasses.replace(g, payload=b"") for g in record.galleys))
            self._write_file(self.path / path, ojs.emit_article(stripped), "record")
            galley_dir = self.path / _galley_dir(path)
            if record.galleys:
                self._step("write-galley-dir")
                galley_dir.mkdir(parents=True, exist_ok=True)
                # the dir stays unreferenced until the manifest commit, so
                # plain writes are crash-safe here (no tmp+rename dance)
                for name, galley in zip(_galley_filenames(record.galleys), record.galleys):
                    self._step("write-galley")
                    try:
                        (galley_dir / name).write_bytes(galley.payload)
                    except OSError as exc:
                        raise StoreWrite(f"cannot write {galley_dir / name}: {exc}") from exc

            manifest.entries[record.identifier] = _Entry(record.identifier, stamp, False, path)
            self._commit(manifest)
            if old is not None and old.path != "-" and old.path != path:
                self._cleanup_entry(old)
            return "added" if old is None or old.deleted else "updated"

    def mark_deleted(self, identifier: str, datestamp: Datestamp | None = None) -> str:
        """Tombstone a record: the header stays, the payload files go.

        Unknown identifiers get a fresh tombstone (needed when a harvest
        propagates a remote deletion we never saw alive).
        """
        _check_identifier(identifier)
        with self._lock:
            manifest = self._load()
            old = manifest.entries.get(identifier)
            if old is not None and old.deleted:
                return "unchanged"
            stamp = self._next_stamp(old, datestamp)
            manifest.entries[identifier] = _Entry(identifier, stamp, True, "-")
            self._commit(manifest)
            if old is not None:
                self._cleanup_entry(old)
            return "deleted"

    def set_watermark(self, stamp: Datestamp) -> None:
        with self._lock:
            manifest = self._load()
            if manifest.watermark is None or manifest.watermark.instant < stamp.instant:
                manifest.watermark = stamp
                self._commit(manifest)

    # -- internals ---------------------------------------------------------

    def _step(self, name: str) -> None:
        if self.fault_hook is not None:
            self.fault_hook(name)

    def _write_file(self, target: Path, data: bytes, label: str) -> None:
        tmp = target.with_name(target.name + ".tmp")
        self._step(f"write-{label}")
        try:
            tmp.write_bytes(data)
            self._step(f"rename-{label}")
            os.replace(tmp, target)
        except MetabridgeError:
            raise
        except OSError as exc:
            raise StoreWrite(f"cannot write {target}: {exc}") from exc

    def _commit(self, manifest: _Manifest) -> None:
        lines = []
        if manifest.watermark is not None:
            lines.append(f"#watermark\t{format_datestamp(manifest.watermark)}")
        for identifier in sorted(manifest.entries):
            e = manifest.entries[identifier]
            flag = "D" if e.deleted else "A"
            lines.append(f"{e.identifier}\t{format_datestamp(e.datestamp)}\t{flag}\t{e.path}")
        self._write_file(self.path / "manifest.tsv", ("\n".join(lines) + "\n").encode(), "manifest")

    def _load(self) -> _Manifest:
        path = self.path / "manifest.tsv"
        if not path.exists():
            return _Manifest({})
        try:
            text = path.read_text("utf-8")
        except OSError as exc:
            raise StoreRead(f"cannot read manifest: {exc}") from exc
        entries: dict[str, _Entry] = {}
        watermark = None
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line:
                continue
            if line.startswith("#watermark\t"):
                watermark = parse_datestamp(line.split("\t", 1)[1])
                continue
            fields = line.split("\t")
            if len(fields) != 4 or fields[2] not in ("D", "A"):
                raise StoreRead(f"manifest line {lineno} is malformed: {line!r}")
            identifier, stamp, flag, rel = fields
            entries[identifier] = _Entry(identifier, parse_datestamp(stamp), flag == "D", rel)
        return _Manifest(entries, watermark)

    def _next_stamp(self, old: _Entry | None, explicit: Datestamp | None) -> Datestamp:
        if explicit is not None:
            return explicit.at_granularity(Granularity.SECOND)
        stamp = Datestamp(self.clock())
        if old is not None and stamp.instant <= old.datestamp.instant:
            stamp = Datestamp(old.datestamp.instant + dt.timedelta(seconds=1))
        return stamp

    def _allocate_path(self, manifest: _Manifest, identifier: str, old: _Entry | None) -> str:
        taken = {e.path for e in manifest.entries.values()}
        base = _SANITIZE_RE.sub("_", identifier)[:100] or "record"
        gen = 1
        if old is not None and old.path != "-":
            m = _GEN_RE.match(old.path)
            if m:
                base = m.group("base")
                gen = int(m.group("gen") or 1) + 1
        candidate = f"records/{base}.xml" if gen == 1 else f"records/{base}.g{gen}.xml"
        # distinct identifiers may share a sanitized base: never reuse a path
        while candidate in taken or (self.path / candidate).exists():
            gen += 1
            candidate = f"records/{base}.g{gen}.xml"
        return candidate

    def _read_record(self, entry: _Entry) -> ArticleRecord:
        path = self.path / entry.path
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise StoreRead(f"cannot read {path}: {exc}") from exc
        try:
            record = ojs.parse_article(data)
        except MetabridgeError as exc:
            raise StoreRead(f"corrupt record file {path}: {exc}") from exc
        if not record.galleys:
            return record
        galley_dir = self.path / _galley_dir(entry.path)
        galleys = []
        for name, galley in zip(_galley_filenames(record.galleys), record.galleys):
            try:
                payload = (galley_dir / name).read_bytes()
            except OSError as exc:
                raise StoreRead(f"missing galley payload {galley_dir / name}: {exc}") from exc
            galleys.append(dataclasses.replace(galley, payload=payload))
        return dataclasses.replace(record, galleys=tuple(galleys))

    def _cleanup_entry(self, entry: _Entry) -> None:
        self._step("cleanup")
        if entry.path == "-":
            return
        _remove(self.path / entry.path)
        _remove_tree(self.path / _galley_dir(entry.path))

    def _recover(self) -> None:
        """Sweep crash leftovers: temp files and uncommitted generations.

        Only unreferenced paths are touched, so payload files inside
        committed galley directories are never at risk, whatever their
        names.
        """
        manifest = self._load()
        referenced = {e.path for e in manifest.entries.values() if e.path != "-"}
        for entry in manifest.entries.values():
            if not entry.deleted and not (self.path / entry.path).exists():
                raise StoreRead(f"manifest references missing file {entry.path}")
        _remove(self.path / "manifest.tsv.tmp")
        for file in (self.path / "records").iterdir():
            if f"records/{file.name}" not in referenced:
                _remove(file)
        galley_dirs = {_galley_dir(p) for p in referenced}
        for d in (self.path / "galleys").iterdir():
            if d.is_dir() and f"galleys/{d.name}" not in galley_dirs:
                _remove_tree(d)


def _check_identifier(identifier: str) -> None:
    if any(c in identifier for c in "\t\n\r"):
        raise StoreWrite(f"identifier {identifier!r} contains control characters")


def _galley_dir(record_path: str) -> str:
    m = _GEN_RE.match(record_path)
    name = m.group("base") if m else record_path
    if m and m.group("gen"):
        name = f"{name}.g{m.group('gen')}"
    return f"galleys/{name}"


def _galley_filenames(galleys: Iterable[GalleyFile]) -> list[str]:
    names = []
    seen = set()
    for i, galley in enumerate(galleys):
        name = galley.filename or f"galley-{i}"
        while name in seen:
            name = f"{i}-{name}"
        seen.add(name)
        names.append(name)
    return names


def _remove(path: Path) -> None:
    try:
        path.unlink()
    except OSError:
        pass


def _remove_tree(path: Path) -> None:
    if not path.exists():
        return
    for child in sorted(path.rglob("*"), reverse=True):
        _remove(child)
    try:
        path.rmdir()
    except OSError:
        pass
