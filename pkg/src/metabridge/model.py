"""Canonical bibliographic record model and cross-cutting helpers.

Every conversion in this package goes through :class:`ArticleRecord`: the
codecs parse into it and emit from it, the store persists it, and the OAI
layers ship it (or its Dublin Core projection) over the wire. All types are
immutable values; all operations here are pure.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .errors import UnsupportedLanguage


class Lang(Enum):
    """Closed set of record languages."""

    RUS = "RUS"
    ENG = "ENG"


_LOCALE_BY_LANG = {Lang.RUS: "ru_RU", Lang.ENG: "en_US"}
_LANG_BY_LOCALE = {locale: lang for lang, locale in _LOCALE_BY_LANG.items()}

#: Deterministic emission order for language-keyed fields (Russian first).
LANG_ORDER = (Lang.RUS, Lang.ENG)

_PAGES_RE = re.compile(r"^\d+(-\d+)?$")


def locale_map(code: Lang) -> str:
    """Map a language code to its journal-platform locale string."""
    try:
        return _LOCALE_BY_LANG[code]
    except (KeyError, TypeError):
        raise UnsupportedLanguage(f"unknown language code {code!r}") from None


def locale_unmap(locale: str) -> Lang:
    """Inverse of :func:`locale_map`; only ru_RU and en_US are accepted."""
    try:
        return _LANG_BY_LOCALE[locale]
    except KeyError:
        raise UnsupportedLanguage(f"unknown locale {locale!r}") from None


@dataclass(frozen=True)
class LocalizedText:
    """Text keyed by language: at most one entry per language, never empty."""

    entries: Mapping[Lang, str] = field(default_factory=dict)

    def __post_init__(self):
        clean: dict[Lang, str] = {}
        for lang, text in self.entries.items():
            if not isinstance(lang, Lang):
                raise TypeError(f"LocalizedText keys must be Lang, got {lang!r}")
            if not text:
                raise ValueError(f"empty text for {lang.value}")
            clean[lang] = text
        object.__setattr__(self, "entries", clean)

    @classmethod
    def of(cls, ru: str | None = None, en: str | None = None) -> "LocalizedText":
        entries: dict[Lang, str] = {}
        if ru:
            entries[Lang.RUS] = ru
        if en:
            entries[Lang.ENG] = en
        return cls(entries)

    def get(self, lang: Lang) -> str | None:
        return self.entries.get(lang)

    def items_ordered(self) -> list[tuple[Lang, str]]:
        """Entries in the fixed RUS-first order used by all emitters."""
        return [(lang, self.entries[lang]) for lang in LANG_ORDER if lang in self.entries]

    def __bool__(self) -> bool:
        return bool(self.entries)


EMPTY_TEXT = LocalizedText()


@dataclass(frozen=True)
class Author:
    firstname: str = ""
    lastname: str = ""
    middlename: str | None = None
    country: str | None = None
    email: str | None = None
    biography: LocalizedText | None = None
    affiliation: str | None = None
    primary_contact: bool = False
    #: True when firstname/middlename hold initials recovered from a
    #: surname+initials source and the full names are unrecoverable.
    initials_only: bool = False

    def __post_init__(self):
        # canonical form: absent optional parts are None, never ""
        for name in ("middlename", "country", "email", "affiliation"):
            if getattr(self, name) == "":
                object.__setattr__(self, name, None)
        if self.biography is not None and not self.biography:
            object.__setattr__(self, "biography", None)


@dataclass(frozen=True)
class Reference:
    """One plain-text citation; stored stripped of surrounding whitespace."""

    text: str

    def __post_init__(self):
        stripped = self.text.strip()
        if not stripped:
            raise ValueError("reference text is empty")
        object.__setattr__(self, "text", stripped)


@dataclass(frozen=True)
class GalleyFile:
    """Presentation file of an article, typically the PDF."""

    label: str
    filename: str
    mime_type: str
    payload: bytes = b""

    def __post_init__(self):
        if "/" in self.filename or "\\" in self.filename:
            raise ValueError(f"galley filename {self.filename!r} contains a path separator")


@dataclass(frozen=True)
class ArticleRecord:
    """Canonical multilingual article record.

    ``titles`` may legitimately be empty while a record is being authored;
    emitters and :func:`validate_for_indexing` enforce the presence rules.
    ``deleted=True`` marks a tombstone: such records carry no content and are
    rejected by every emission path.
    """

    identifier: str = ""
    titles: LocalizedText = EMPTY_TEXT
    abstracts: LocalizedText = EMPTY_TEXT
    subjects: Mapping[Lang, tuple[str, ...]] = field(default_factory=dict)
    authors: tuple[Author, ...] = ()
    pages: str | None = None
    art_type: str = "PRC"
    references: tuple[Reference, ...] = ()
    galleys: tuple[GalleyFile, ...] = ()
    date_published: dt.date | None = None
    deleted: bool = False

    def __post_init__(self):
        object.__setattr__(self, "authors", tuple(self.authors))
        object.__setattr__(self, "references", tuple(self.references))
        object.__setattr__(self, "galleys", tuple(self.galleys))
        subjects = {}
        for lang, words in self.subjects.items():
            if not isinstance(lang, Lang):
                raise TypeError(f"subject keys must be Lang, got {lang!r}")
            words = tuple(w for w in (word.strip() for word in words) if w)
            if words:
                subjects[lang] = words
        object.__setattr__(self, "subjects", subjects)
        if self.pages is not None and not _PAGES_RE.match(self.pages):
            raise ValueError(f"pages {self.pages!r} must be 'first-last' or a single integer")
        if sum(1 for a in self.authors if a.primary_contact) > 1:
            raise ValueError("more than one primary contact author")

    def subjects_ordered(self) -> list[tuple[Lang, tuple[str, ...]]]:
        return [(lang, self.subjects[lang]) for lang in LANG_ORDER if lang in self.subjects]


def initials_of(author: Author) -> str:
    """Dotted initials of an author, e.g. ``И.А.``.

    Empty when the author has no firstname; one letter when there is no
    middlename.
    """
    first = _first_letter(author.firstname)
    if first is None:
        return ""
    out = first + "."
    middle = _first_letter(author.middlename or "")
    if middle is not None:
        out += middle + "."
    return out


def _first_letter(text: str) -> str | None:
    for ch in text:
        if ch.isalpha():
            return ch
    return None


def split_initials(initials: str) -> tuple[str, str | None]:
    """Split a dotted initials string into (firstname, middlename) initials.

    ``"И.А."`` becomes ``("И.", "А.")``; a single initial yields no
    middlename. This is the lossy inverse used when ingesting
    surname+initials sources.
    """
    parts = re.findall(r"[^\W\d_]+", initials)
    if not parts:
        return "", None
    first = parts[0] + "."
    middle = parts[1] + "." if len(parts) > 1 else None
    return first, middle


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" or "warning"
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "findings", tuple(self.findings))

    @property
    def ok(self) -> bool:
        return not self.findings

    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "warning"]


_URL_RE = re.compile(r"https?://", re.IGNORECASE)


def validate_for_indexing(record: ArticleRecord) -> ValidationReport:
    """Check the metadata completeness that aggregator indexing relies on.

    Errors block indexing; warnings flag weak but tolerable records. A
    reference counts as full text when its citation carries an http(s) URL
    (link-based full-text policy: the text lives at the linked collection).
    Findings come out in a fixed rule order, so the report is deterministic.
    """
    findings: list[Finding] = []

    def error(code: str, message: str) -> None:
        findings.append(Finding("error", code, message))

    def warning(code: str, message: str) -> None:
        findings.append(Finding("warning", code, message))

    if record.deleted:
        error("deleted", "record is a tombstone")
        return ValidationReport(tuple(findings))

    if not record.titles:
        error("no-title", "record has no title in any language")
    if not any(a.lastname for a in record.authors):
        error("no-author", "record has no author with a lastname")
    if record.pages is None and record.date_published is None:
        error("no-pages-or-date", "record has neither pages nor a publication date")
    has_fulltext_link = any(_URL_RE.search(r.text) for r in record.references)
    if not record.galleys and not has_fulltext_link:
        error("no-fulltext", "record has no galley file and no full-text reference link")

    if not record.abstracts:
        warning("no-abstract", "record has no abstract")
    if not record.subjects:
        warning("no-subjects", "record has no keywords")
    if Lang.ENG not in record.titles.entries:
        warning("no-eng-title", "record has no English title")
    for author in record.authors:
        if author.lastname and not initials_of(author):
            warning("author-no-firstname", f"author {author.lastname!r} has no firstname; initials will be empty")

    return ValidationReport(tuple(findings))


def primary_author(record: ArticleRecord) -> Author | None:
    for author in record.authors:
        if author.primary_contact:
            return author
    return None


def split_keywords(raw: str) -> tuple[str, ...]:
    """Split a single ``;``-delimited keyword string into trimmed keywords."""
    return tuple(w for w in (part.strip() for part in raw.split(";")) if w)


def join_keywords(words: Iterable[str]) -> str:
    return "; ".join(words)
