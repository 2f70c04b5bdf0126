"""Plain-text authoring template: parse into a record and render back.

Grammar (bit-exact contract):

* UTF-8 text; ``#`` at column 1 starts a comment line.
* Section headers ``[NAME]`` alone on a line; NAME is one of ARTICLE,
  AUTHOR, REFERENCES, GALLEY. Exactly one ARTICLE section; AUTHOR and
  GALLEY sections repeat in record order.
* Entries ``key = value`` (whitespace around ``=`` optional). Keys are
  unique within a section, except ``ref`` in REFERENCES which repeats,
  one line per citation.
* Localizable keys take a ``.ru``/``.en`` suffix (title, abstract,
  keywords, biography). Keyword values are ``;``-delimited lists.
* A physical line ending with ``\\`` continues on the next line; parts
  are joined with a single space (long abstracts stay editable).

Galley payload bytes are never inlined: ``file = path`` names a file that
the conversion front end resolves relative to the template.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import re
from dataclasses import dataclass
from posixpath import basename

from .errors import (
    BadLanguageSuffix,
    DuplicateKey,
    MalformedLine,
    MissingSection,
)
from .model import (
    ArticleRecord,
    Author,
    GalleyFile,
    Lang,
    LocalizedText,
    Reference,
    join_keywords,
    split_keywords,
)

_SECTION_RE = re.compile(r"^\[([A-Z]+)\]$")
_KEY_RE = re.compile(r"^[a-z_]+(\.[a-z]{2})?$")
_PAGES_RE = re.compile(r"^\d+(-\d+)?$")

_LANG_BY_SUFFIX = {"ru": Lang.RUS, "en": Lang.ENG}
_SUFFIX_BY_LANG = {lang: suffix for suffix, lang in _LANG_BY_SUFFIX.items()}

_SECTION_KEYS = {
    "ARTICLE": {"id", "title", "abstract", "keywords", "pages", "type", "date"},
    "AUTHOR": {"firstname", "middlename", "lastname", "country", "email",
               "affiliation", "biography", "primary_contact"},
    "REFERENCES": {"ref"},
    "GALLEY": {"label", "file", "mime_type"},
}
_LOCALIZED_KEYS = {"title", "abstract", "keywords", "biography"}


@dataclass(frozen=True)
class Entry:
    key: str
    value: str
    line: int


@dataclass(frozen=True)
class TemplateSection:
    name: str
    entries: tuple[Entry, ...]

    def get(self, key: str) -> str | None:
        for entry in self.entries:
            if entry.key == key:
                return entry.value
        return None


@dataclass(frozen=True)
class TemplateDocument:
    sections: tuple[TemplateSection, ...]

    def article(self) -> TemplateSection:
        return next(s for s in self.sections if s.name == "ARTICLE")

    def all_named(self, name: str) -> list[TemplateSection]:
        return [s for s in self.sections if s.name == name]


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _logical_lines(text: str):
    """Yield (line_number, content) with continuations folded in.

    line_number is the 1-based physical line the logical line started on.
    """
    lines = text.split("\n")
    i = 0
    while i < len(lines):
        start = i + 1
        parts = [lines[i]]
        while parts[-1].endswith("\\"):
            parts[-1] = parts[-1][:-1].rstrip()
            i += 1
            if i < len(lines):
                parts.append(lines[i].strip())
            else:
                break
        if len(parts) == 1:
            yield start, parts[0]
        else:
            yield start, " ".join(p for p in parts if p)
        i += 1


def parse_document(text: str) -> TemplateDocument:
    sections: list[tuple[str, list[Entry]]] = []
    current: list[Entry] | None = None
    current_name = ""

    for lineno, raw in _logical_lines(text):
        if raw.startswith("#"):
            continue
        line = raw.strip()
        if not line:
            continue
        header = _SECTION_RE.match(line)
        if header:
            name = header.group(1)
            if name not in _SECTION_KEYS:
                raise MalformedLine(lineno, line)
            if name == "ARTICLE" and any(n == "ARTICLE" for n, _ in sections):
                raise MalformedLine(lineno, "[ARTICLE]")
            current = []
            current_name = name
            sections.append((name, current))
            continue
        if current is None:
            raise MalformedLine(lineno, line)
        if "=" not in line:
            raise MalformedLine(lineno, line)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not _KEY_RE.match(key):
            raise MalformedLine(lineno, line)
        base, _, suffix = key.partition(".")
        if suffix:
            if base not in _LOCALIZED_KEYS or base not in _SECTION_KEYS[current_name]:
                raise MalformedLine(lineno, line)
            if suffix not in _LANG_BY_SUFFIX:
                raise BadLanguageSuffix(key, lineno)
        else:
            if base not in _SECTION_KEYS[current_name]:
                raise MalformedLine(lineno, line)
            if base in _LOCALIZED_KEYS:
                raise BadLanguageSuffix(key, lineno)
        repeatable = current_name == "REFERENCES" and key == "ref"
        if not repeatable and any(e.key == key for e in current):
            raise DuplicateKey(key, lineno)
        current.append(Entry(key, value, lineno))

    if not any(name == "ARTICLE" for name, _ in sections):
        raise MissingSection("missing [ARTICLE] section")
    return TemplateDocument(tuple(TemplateSection(n, tuple(es)) for n, es in sections))


def _localized(section: TemplateSection, base: str) -> LocalizedText:
    entries: dict[Lang, str] = {}
    for entry in section.entries:
        key_base, _, suffix = entry.key.partition(".")
        if key_base == base and suffix and entry.value:
            entries[_LANG_BY_SUFFIX[suffix]] = entry.value
    return LocalizedText(entries)


def to_record(doc: TemplateDocument) -> ArticleRecord:
    article = doc.article()

    subjects: dict[Lang, tuple[str, ...]] = {}
    for entry in article.entries:
        base, _, suffix = entry.key.partition(".")
        if base == "keywords" and suffix and entry.value:
            words = split_keywords(entry.value)
            if words:
                subjects[_LANG_BY_SUFFIX[suffix]] = words

    date_published = None
    raw_date = article.get("date")
    if raw_date:
        try:
            date_published = dt.date.fromisoformat(raw_date)
        except ValueError:
            line = next(e.line for e in article.entries if e.key == "date")
            raise MalformedLine(line, f"date = {raw_date}") from None

    pages = article.get("pages") or None
    if pages is not None and not _PAGES_RE.match(pages):
        line = next(e.line for e in article.entries if e.key == "pages")
        raise MalformedLine(line, f"pages = {pages}")

    authors = []
    explicit_primary = False
    for section in doc.all_named("AUTHOR"):
        flag = section.get("primary_contact")
        if flag is not None:
            if flag not in ("true", "false"):
                line = next(e.line for e in section.entries if e.key == "primary_contact")
                raise MalformedLine(line, f"primary_contact = {flag}")
            explicit_primary = True
        bio = _localized(section, "biography")
        authors.append(Author(
            firstname=section.get("firstname") or "",
            lastname=section.get("lastname") or "",
            middlename=section.get("middlename") or None,
            country=section.get("country") or None,
            email=section.get("email") or None,
            biography=bio if bio else None,
            affiliation=section.get("affiliation") or None,
            primary_contact=flag == "true",
        ))
    if authors and not explicit_primary:
        authors[0] = dataclasses.replace(authors[0], primary_contact=True)

    references = []
    for section in doc.all_named("REFERENCES"):
        for entry in section.entries:
            if entry.key == "ref" and entry.value.strip():
                references.append(Reference(entry.value))

    galleys = []
    for section in doc.all_named("GALLEY"):
        path = section.get("file") or ""
        galleys.append(GalleyFile(
            label=section.get("label") or "",
            filename=basename(path.replace("\\", "/")),
            mime_type=section.get("mime_type") or "",
        ))

    return ArticleRecord(
        identifier=article.get("id") or "",
        titles=_localized(article, "title"),
        abstracts=_localized(article, "abstract"),
        subjects=subjects,
        authors=tuple(authors),
        pages=pages,
        art_type=article.get("type") or "PRC",
        references=tuple(references),
        galleys=tuple(galleys),
        date_published=date_published,
    )


def galley_paths(doc: TemplateDocument) -> list[str]:
    """The raw ``file =`` values of all GALLEY sections, in order."""
    return [section.get("file") or "" for section in doc.all_named("GALLEY")]


def parse_template(text: str) -> ArticleRecord:
    """Parse template text into a record (galley payloads stay empty)."""
    return to_record(parse_document(text))


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def render_template(record: ArticleRecord) -> str:
    """Render a record back into template text.

    Inverse of :func:`parse_template` on the expressible subset: values
    without newlines or surrounding whitespace, keywords without ``;``,
    galley payloads referenced by filename only.
    """
    if record.deleted:
        raise ValueError("tombstone records cannot be rendered")
    out: list[str] = ["[ARTICLE]"]

    def put(key: str, value: str | None) -> None:
        if value is None or value == "":
            return
        if "\n" in value or value != value.strip() or value.endswith("\\"):
            raise ValueError(f"{key} value is not expressible in template syntax: {value!r}")
        out.append(f"{key} = {value}")

    put("id", record.identifier)
    for lang, text in record.titles.items_ordered():
        put(f"title.{_SUFFIX_BY_LANG[lang]}", text)
    for lang, text in record.abstracts.items_ordered():
        put(f"abstract.{_SUFFIX_BY_LANG[lang]}", text)
    for lang, words in record.subjects_ordered():
        put(f"keywords.{_SUFFIX_BY_LANG[lang]}", join_keywords(words))
    put("pages", record.pages)
    if record.art_type != "PRC":
        put("type", record.art_type)
    if record.date_published is not None:
        put("date", record.date_published.isoformat())

    primaries = [i for i, a in enumerate(record.authors) if a.primary_contact]
    for i, author in enumerate(record.authors):
        out.append("")
        out.append("[AUTHOR]")
        put("firstname", author.firstname)
        put("middlename", author.middlename)
        put("lastname", author.lastname)
        put("country", author.country)
        put("email", author.email)
        put("affiliation", author.affiliation)
        if author.biography is not None:
            for lang, text in author.biography.items_ordered():
                put(f"biography.{_SUFFIX_BY_LANG[lang]}", text)
        # the first author is implicitly primary; only deviations are written
        if author.primary_contact and i != 0:
            out.append("primary_contact = true")
        elif i == 0 and record.authors and not primaries:
            out.append("primary_contact = false")

    if record.references:
        out.append("")
        out.append("[REFERENCES]")
        for ref in record.references:
            put("ref", ref.text)

    for galley in record.galleys:
        out.append("")
        out.append("[GALLEY]")
        put("label", galley.label)
        put("file", galley.filename)
        put("mime_type", galley.mime_type)

    return "\n".join(out) + "\n"
