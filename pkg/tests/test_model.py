from __future__ import annotations

import datetime as dt

import pytest

from metabridge.errors import UnsupportedLanguage
from metabridge.model import (
    ArticleRecord,
    Author,
    GalleyFile,
    Lang,
    LocalizedText,
    Reference,
    initials_of,
    join_keywords,
    locale_map,
    locale_unmap,
    split_initials,
    split_keywords,
    validate_for_indexing,
)


class TestLocaleMapping:
    def test_rus_maps_to_ru_ru(self):
        assert locale_map(Lang.RUS) == "ru_RU"

    def test_eng_maps_to_en_us(self):
        assert locale_map(Lang.ENG) == "en_US"

    def test_bijection_exhaustive(self):
        for lang in Lang:
            assert locale_unmap(locale_map(lang)) is lang

    def test_unknown_locale_rejected(self):
        with pytest.raises(UnsupportedLanguage):
            locale_unmap("de_DE")

    def test_unknown_code_rejected(self):
        with pytest.raises(UnsupportedLanguage):
            locale_map("RUS")  # plain string, not a Lang


class TestInitials:
    def test_first_author_of_fragment(self):
        assert initials_of(Author("Ирина", "Мборо", "Анатольевна")) == "И.А."

    def test_second_author_of_fragment(self):
        assert initials_of(Author("Дмитрий", "Прокудин", "Евгеньевич")) == "Д.Е."

    def test_no_middlename(self):
        assert initials_of(Author("Анна", "Иванова")) == "А."

    def test_empty_firstname_gives_empty_initials(self):
        assert initials_of(Author("", "Иванова", "Петровна")) == ""

    def test_nonletter_prefix_skipped(self):
        assert initials_of(Author("«Ирина»", "Мборо")) == "И."

    def test_split_initials(self):
        assert split_initials("И.А.") == ("И.", "А.")
        assert split_initials("Д.Е.") == ("Д.", "Е.")
        assert split_initials("А.") == ("А.", None)
        assert split_initials("") == ("", None)

    def test_initials_stable_after_split(self):
        first, middle = split_initials("И.А.")
        assert initials_of(Author(first, "Мборо", middle)) == "И.А."


class TestModelInvariants:
    def test_localized_text_rejects_empty_strings(self):
        with pytest.raises(ValueError):
            LocalizedText({Lang.RUS: ""})

    def test_reference_strips_whitespace(self):
        assert Reference("  текст  ").text == "текст"

    def test_reference_rejects_blank(self):
        with pytest.raises(ValueError):
            Reference("   ")

    def test_galley_filename_rejects_path_separators(self):
        with pytest.raises(ValueError):
            GalleyFile("PDF", "a/b.pdf", "application/pdf")

    def test_pages_format_enforced(self):
        ArticleRecord(identifier="x", pages="178-183")
        ArticleRecord(identifier="x", pages="7")
        with pytest.raises(ValueError):
            ArticleRecord(identifier="x", pages="vii-ix")

    def test_single_primary_contact(self):
        authors = (Author("А", "Б", primary_contact=True),
                   Author("В", "Г", primary_contact=True))
        with pytest.raises(ValueError):
            ArticleRecord(identifier="x", authors=authors)

    def test_author_optional_fields_normalize_to_none(self):
        author = Author("А", "Б", middlename="", country="", email="", affiliation="")
        assert author.middlename is None
        assert author.country is None
        assert author.email is None
        assert author.affiliation is None

    def test_subject_words_trimmed(self):
        record = ArticleRecord(identifier="x", subjects={Lang.RUS: (" a ", "", "b")})
        assert record.subjects[Lang.RUS] == ("a", "b")


class TestKeywords:
    def test_split_trims_and_drops_empties(self):
        assert split_keywords("a; b ;; c ") == ("a", "b", "c")

    def test_join_inverse(self):
        words = ("информационные системы", "информатизация")
        assert split_keywords(join_keywords(words)) == words


def _record(**kwargs) -> ArticleRecord:
    defaults = dict(
        identifier="rec-1",
        titles=LocalizedText.of(ru="Название"),
        authors=(Author("Ирина", "Мборо", primary_contact=True),),
        pages="178-183",
        galleys=(GalleyFile("PDF", "a.pdf", "application/pdf", b"%PDF"),),
    )
    defaults.update(kwargs)
    return ArticleRecord(**defaults)


class TestValidateForIndexing:
    def test_fragment_record_has_no_errors(self, fragment_record):
        report = validate_for_indexing(fragment_record)
        assert report.errors() == []

    def test_empty_record_fires_all_error_rules(self):
        report = validate_for_indexing(ArticleRecord(identifier="x"))
        codes = {f.code for f in report.errors()}
        assert codes == {"no-title", "no-author", "no-pages-or-date", "no-fulltext"}

    def test_title_author_date_but_no_fulltext(self):
        record = _record(galleys=(), pages=None, date_published=dt.date(2014, 10, 11))
        report = validate_for_indexing(record)
        assert [f.code for f in report.errors()] == ["no-fulltext"]

    def test_url_reference_counts_as_fulltext(self):
        record = _record(
            galleys=(),
            references=(Reference("Статья. URL: http://ojs.ifmo.ru/article/1"),),
        )
        assert validate_for_indexing(record).errors() == []

    def test_plain_reference_is_not_fulltext(self):
        record = _record(galleys=(), references=(Reference("Книга. М., 2006."),))
        assert [f.code for f in validate_for_indexing(record).errors()] == ["no-fulltext"]

    @pytest.mark.parametrize("mutation,expected", [
        (dict(titles=LocalizedText()), "no-title"),
        (dict(authors=()), "no-author"),
        (dict(pages=None), "no-pages-or-date"),
        (dict(galleys=()), "no-fulltext"),
    ])
    def test_single_deletion_fires_single_error(self, mutation, expected):
        report = validate_for_indexing(_record(**mutation))
        assert [f.code for f in report.errors()] == [expected]

    def test_warnings(self):
        record = _record()  # no abstract, no subjects, no ENG title
        codes = {f.code for f in validate_for_indexing(record).warnings()}
        assert codes == {"no-abstract", "no-subjects", "no-eng-title"}

    def test_empty_firstname_warns_not_errors(self):
        record = _record(authors=(Author("", "Мборо", primary_contact=True),))
        report = validate_for_indexing(record)
        assert report.errors() == []
        assert "author-no-firstname" in {f.code for f in report.warnings()}

    def test_pure_and_order_stable(self, fragment_record):
        first = validate_for_indexing(fragment_record)
        second = validate_for_indexing(fragment_record)
        assert first == second
        assert first.findings == second.findings

    def test_tombstone_never_passes(self):
        record = ArticleRecord(identifier="x", deleted=True)
        report = validate_for_indexing(record)
        assert not report.ok
        assert report.errors()
