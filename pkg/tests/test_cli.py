from __future__ import annotations

import threading
import time
import xml.etree.ElementTree as ET

import pytest

from metabridge.cli import main
from metabridge.ojs import parse_article, parse_ojs
from metabridge.store import Store

from conftest import GOLDEN_ARTICULATUS, GOLDEN_OJS

SAMPLE_TEMPLATE = """\
[ARTICLE]
id = ims-2013-dl03
title.ru = Развитие комплексных информационных систем
abstract.ru = Обзорная статья.
keywords.ru = информационные системы; информатизация
pages = 178-183

[AUTHOR]
firstname = Ирина
lastname = Мборо

[GALLEY]
label = PDF
file = DL03Mbogo.pdf
mime_type = application/pdf
"""


@pytest.fixture
def template_dir(tmp_path):
    directory = tmp_path / "in"
    directory.mkdir()
    (directory / "article.tpl").write_text(SAMPLE_TEMPLATE, encoding="utf-8")
    (directory / "DL03Mbogo.pdf").write_bytes(b"%PDF-1.4 galley payload")
    return directory


class TestTemplateCommand:
    def test_output_accepted_back_by_parser(self, template_dir, tmp_path, capsys):
        out = tmp_path / "article.xml"
        assert main(["template", str(template_dir / "article.tpl"), str(out)]) == 0
        record = parse_article(out.read_bytes())
        assert record.identifier == "ims-2013-dl03"
        assert record.pages == "178-183"
        assert record.galleys[0].payload == b"%PDF-1.4 galley payload"
        assert "wrote" in capsys.readouterr().out

    def test_missing_article_section_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.tpl"
        bad.write_text("[AUTHOR]\nlastname = X\n", encoding="utf-8")
        assert main(["template", str(bad), str(tmp_path / "out.xml")]) == 2
        assert "ARTICLE" in capsys.readouterr().err

    def test_malformed_line_reports_line_number(self, tmp_path, capsys):
        bad = tmp_path / "bad.tpl"
        bad.write_text("[ARTICLE]\ntitle.ru = X\nbroken line\n", encoding="utf-8")
        assert main(["template", str(bad), str(tmp_path / "out.xml")]) == 2
        assert "line 3" in capsys.readouterr().err

    def test_absent_galley_file_exits_2_naming_path(self, tmp_path, capsys):
        tpl = tmp_path / "a.tpl"
        tpl.write_text("[ARTICLE]\ntitle.ru = X\n[GALLEY]\nfile = missing.pdf\n",
                       encoding="utf-8")
        assert main(["template", str(tpl), str(tmp_path / "out.xml")]) == 2
        assert "missing.pdf" in capsys.readouterr().err

    def test_validation_warnings_on_stderr(self, tmp_path, capsys):
        tpl = tmp_path / "a.tpl"
        tpl.write_text("[ARTICLE]\ntitle.ru = X\npages = 1\n[AUTHOR]\nlastname = А\n"
                       "[GALLEY]\nfile = g.bin\n", encoding="utf-8")
        (tmp_path / "g.bin").write_bytes(b"x")
        assert main(["template", str(tpl), str(tmp_path / "out.xml")]) == 0
        err = capsys.readouterr().err
        assert "no-abstract" in err

    def test_quiet_suppresses_diagnostics(self, tmp_path, capsys):
        tpl = tmp_path / "a.tpl"
        tpl.write_text("[ARTICLE]\ntitle.ru = X\npages = 1\n[AUTHOR]\nlastname = А\n"
                       "[GALLEY]\nfile = g.bin\n", encoding="utf-8")
        (tmp_path / "g.bin").write_bytes(b"x")
        assert main(["--quiet", "template", str(tpl), str(tmp_path / "out.xml")]) == 0
        assert capsys.readouterr().err == ""


class TestConvertCommand:
    def test_golden_crosswalk_via_cli(self, tmp_path, capsys):
        out = tmp_path / "neb.xml"
        code = main(["convert", "--from", "ojs", "--to", "neb",
                     "--affiliation", "Санкт-Петербургский государственный университет",
                     str(GOLDEN_OJS), str(out)])
        assert code == 0
        emitted = ET.fromstring(out.read_bytes())
        golden = ET.fromstring(GOLDEN_ARTICULATUS.read_bytes())
        for path in ("artTitles/artTitle", "authors/author/individInfo/surname", "pages"):
            assert [e.text for e in emitted.findall(path)] == \
                [e.text for e in golden.findall(path)]
        assert "loss: subjects (RUS): 3 dropped" in capsys.readouterr().out

    def test_neb_to_ojs(self, tmp_path):
        out = tmp_path / "ojs.xml"
        assert main(["convert", "--from", "neb", "--to", "ojs",
                     str(GOLDEN_ARTICULATUS), str(out)]) == 0
        record = parse_ojs(out.read_bytes()).records[0]
        assert record.authors[0].lastname == "Мборо"
        assert record.authors[0].firstname == "И."

    def test_same_direction_is_usage_error(self, tmp_path, capsys):
        assert main(["convert", "--from", "ojs", "--to", "ojs",
                     str(GOLDEN_OJS), str(tmp_path / "x.xml")]) == 4
        assert "usage" in capsys.readouterr().err

    def test_malformed_input_exits_2(self, tmp_path):
        bad = tmp_path / "bad.xml"
        bad.write_text("<article>", encoding="utf-8")
        assert main(["convert", "--from", "ojs", "--to", "neb",
                     str(bad), str(tmp_path / "y.xml")]) == 2

    def test_custom_rules_file(self, tmp_path):
        from importlib import resources
        rules = tmp_path / "my.rules"
        rules.write_text(
            resources.files("metabridge").joinpath("rules/ojs_to_neb.rules").read_text("utf-8"),
            encoding="utf-8")
        out = tmp_path / "neb.xml"
        assert main(["convert", "--from", "ojs", "--to", "neb", "--rules", str(rules),
                     str(GOLDEN_OJS), str(out)]) == 0

    def test_broken_rules_exit_2(self, tmp_path):
        rules = tmp_path / "my.rules"
        rules.write_text("garbage rules\n", encoding="utf-8")
        assert main(["convert", "--from", "ojs", "--to", "neb", "--rules", str(rules),
                     str(GOLDEN_OJS), str(tmp_path / "neb.xml")]) == 2


class TestValidateCommand:
    def test_fragment_record_is_clean(self, capsys):
        assert main(["validate", str(GOLDEN_OJS)]) == 0
        out = capsys.readouterr().out
        assert "status=ok" in out

    def test_incomplete_record_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "empty.xml"
        bad.write_text("<article><title locale='ru_RU'>X</title></article>",
                       encoding="utf-8")
        assert main(["validate", str(bad)]) == 1
        out = capsys.readouterr().out
        assert "no-author" in out

    def test_unparseable_exits_2(self, tmp_path):
        bad = tmp_path / "bad.xml"
        bad.write_text("not xml", encoding="utf-8")
        assert main(["validate", str(bad)]) == 2


class TestStoreCommands:
    def test_list_on_fresh_dir(self, tmp_path, capsys):
        assert main(["store", "list", str(tmp_path / "fresh")]) == 0
        assert capsys.readouterr().out == ""

    def test_list_show_delete_cycle(self, tmp_path, capsys, template_dir):
        store_dir = tmp_path / "s"
        out = tmp_path / "a.xml"
        main(["template", str(template_dir / "article.tpl"), str(out)])
        store = Store(store_dir)
        store.upsert(parse_article(out.read_bytes()))
        capsys.readouterr()

        assert main(["store", "list", str(store_dir)]) == 0
        listed = capsys.readouterr().out
        assert "ims-2013-dl03" in listed and "active" in listed

        assert main(["store", "show", str(store_dir), "ims-2013-dl03"]) == 0
        shown = capsys.readouterr().out
        assert "<article>" in shown

        assert main(["store", "delete", str(store_dir), "ims-2013-dl03"]) == 0
        capsys.readouterr()
        assert main(["store", "list", str(store_dir)]) == 0
        assert "deleted" in capsys.readouterr().out

    def test_show_unknown_id_exits_2(self, tmp_path):
        assert main(["store", "show", str(tmp_path / "s"), "nope"]) == 2

    def test_store_dir_from_environment(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("METABRIDGE_STORE", str(tmp_path / "env-store"))
        assert main(["store", "list"]) == 0

    def test_store_dir_from_config_file(self, tmp_path, capsys):
        config = tmp_path / "metabridge.ini"
        config.write_text(f"[metabridge]\nstore = {tmp_path / 'cfg-store'}\n",
                          encoding="utf-8")
        assert main(["--config", str(config), "store", "list"]) == 0

    def test_no_store_anywhere_is_usage_error(self, monkeypatch, capsys):
        monkeypatch.delenv("METABRIDGE_STORE", raising=False)
        assert main(["store", "list"]) == 4


class TestUsageErrors:
    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 4

    def test_bad_from_stamp_on_harvest(self, tmp_path):
        assert main(["harvest", "http://127.0.0.1:1/oai", str(tmp_path / "s"),
                     "--from", "11.10.2014"]) == 4


class TestConfigResolution:
    def test_port_precedence_flag_over_env_over_config(self, monkeypatch):
        from types import SimpleNamespace
        from metabridge.cli import _resolve_port
        monkeypatch.setenv("METABRIDGE_PORT", "9100")
        assert _resolve_port(SimpleNamespace(port=9000), {"port": "9200"}) == 9000
        assert _resolve_port(SimpleNamespace(port=None), {"port": "9200"}) == 9100
        monkeypatch.delenv("METABRIDGE_PORT")
        assert _resolve_port(SimpleNamespace(port=None), {"port": "9200"}) == 9200
        assert _resolve_port(SimpleNamespace(port=None), {}) == 8080


class TestServeAndHarvestEndToEnd:
    def test_quickstart_loop_yields_identical_record_sets(self, tmp_path, template_dir, capsys):
        # stage one: template -> OJS XML
        article_xml = tmp_path / "article.xml"
        assert main(["template", str(template_dir / "article.tpl"), str(article_xml)]) == 0

        # stage two: crosswalk for the national library upload
        neb_xml = tmp_path / "article-neb.xml"
        assert main(["convert", "--from", "ojs", "--to", "neb", "--affiliation", "СПбГУ",
                     str(article_xml), str(neb_xml)]) == 0

        # seed store one and serve it
        store_one = Store(tmp_path / "store1")
        store_one.upsert(parse_article(article_xml.read_bytes()))
        from metabridge.oai.provider import ProviderConfig, make_http_server
        server = make_http_server(store_one, ProviderConfig(page_size=10))
        threading.Thread(target=server.serve_forever, daemon=True).start()
        port = server.server_address[1]
        try:
            endpoint = f"http://127.0.0.1:{port}/oai"
            capsys.readouterr()
            code = main(["harvest", endpoint, str(tmp_path / "store2"),
                         "--prefix", "ojs_native", "--delay", "0"])
            assert code == 0
            assert "fetched=1 added=1" in capsys.readouterr().out
        finally:
            server.shutdown()
            server.server_close()

        store_two = Store(tmp_path / "store2")
        ids_one = [h.identifier for h in store_one.list()]
        ids_two = [h.identifier for h in store_two.list()]
        assert ids_one == ids_two
        for identifier in ids_one:
            assert store_two.get(identifier) == store_one.get(identifier)

    def test_harvest_unreachable_endpoint_exits_3(self, tmp_path, capsys):
        assert main(["harvest", "http://127.0.0.1:1/oai", str(tmp_path / "s"),
                     "--delay", "0"]) == 3

    def test_serve_announces_endpoint(self, tmp_path, capsys):
        store_dir = tmp_path / "s"
        Store(store_dir)

        result = {}

        def run():
            result["code"] = main(["serve", str(store_dir), "--port", "0"])

        thread = threading.Thread(target=run, daemon=True)
        thread.start()
        time.sleep(1.0)
        # serve blocks; we only check it started and prints the endpoint
        assert thread.is_alive()
