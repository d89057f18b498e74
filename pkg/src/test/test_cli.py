import io
import json
import socket

import pytest

from cli import (EXIT_DATA, EXIT_NOINPUT, EXIT_OK, EXIT_PARSE, EXIT_UNAVAILABLE, EXIT_USAGE, parse_years, run)
from conftest import feed_row, table5_rows, write_feed, yearly_rows
from settings import ConfigError


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in ("PHISHCENSUS_CONFIG", "PHISHCENSUS_TOP", "PHISHCENSUS_FORMAT", "PHISHCENSUS_FEED_URL"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture(scope="module")
def table5_csv(tmp_path_factory):
    return write_feed(tmp_path_factory.mktemp("t5") / "table5.csv", table5_rows())


@pytest.fixture(scope="module")
def yearly_csv(tmp_path_factory):
    return write_feed(tmp_path_factory.mktemp("years") / "years.csv", yearly_rows())


def detection_types(stdout):
    return [d["type"] for d in json.loads(stdout)["detections"]]


def test_classify_ip():
    code, out, _ = call("classify", "http://67.210.122.222/apple/login")
    assert code == EXIT_OK
    assert detection_types(out) == ["I"]
    assert json.loads(out)["url"] == "http://67.210.122.222/apple/login"


def test_classify_idn():
    code, out, _ = call("classify", "https://www.xn--pple-43d.com/")
    assert code == EXIT_OK
    assert detection_types(out) == ["V", "VI"]


def test_classify_nothing_found():
    code, out, _ = call("classify", "http://example.com/")
    assert code == EXIT_OK
    assert json.loads(out)["detections"] == []


def test_classify_parse_error():
    code, out, err = call("classify", "not a url")
    assert code == EXIT_PARSE
    assert out == ""
    assert json.loads(err)["error"] == "MissingScheme"


def test_classify_with_target():
    code, out, _ = call("classify", "http://secure-login.example.com/x", "--target", "PayPal")
    assert code == EXIT_OK
    assert detection_types(out) == ["II"]


def test_classify_markdown():
    code, out, _ = call("classify", "http://www.g0og1e.com", "--format", "markdown")
    assert code == EXIT_OK
    assert "| IV | Obfuscating with unknown or misspelt domain | google |" in out


@pytest.mark.parametrize("argv", [
    [],
    ["explode"],
    ["classify"],
    ["classify", "http://a.com", "--bogus"],
    ["classify", "http://a.com", "--type3-threshold", "0"],
    ["classify", "http://a.com", "--edit-distance", "-1"],
    ["classify", "http://a.com", "--format", "yaml"],
    ["classify", "http://a.com", "--brands", "/no/such/brands.txt"],
    ["analyze", "x.csv", "--jobs", "0"],
    ["analyze", "x.csv", "--years", "2019-2015"],
    ["trend", "x.csv", "--feature", "ftp"],
    ["trend", "x.csv"],
    ["fetch"],
])
def test_usage_errors(argv):
    code, out, _ = call(*argv)
    assert code == EXIT_USAGE
    assert out == ""


def test_analyze_empty_corpus(feed_file):
    code, out, _ = call("analyze", str(feed_file([])))
    assert code == EXIT_DATA
    assert out == ""


def test_analyze_header_mismatch(feed_file):
    code, _, _ = call("analyze", str(feed_file([["1", "http://a.com/"]], header=["phish_id", "url"])))
    assert code == EXIT_DATA


def test_analyze_missing_file(tmp_path):
    code, _, _ = call("analyze", str(tmp_path / "absent.csv"))
    assert code == EXIT_NOINPUT


def test_analyze_table5(table5_csv):
    code, out, err = call("analyze", str(table5_csv), "--format", "json", "--no-meta", "--top", "11")
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["metadata"] == {}
    t5 = next(t for t in report["tables"] if t["key"] == "T5")
    assert t5["rows"][0] == ["login", 1328, "13.177%"]
    assert t5["rows"][1] == ["account", 508, "5.040%"]
    assert "records ok" in err


def test_analyze_output_is_stable(feed_file):
    path = str(feed_file([feed_row(i, url) for i, url in enumerate([
        "http://67.210.122.222/apple/login", "https://www.xn--pple-43d.com/", "http://www.g0og1e.com"], 1)]))
    first = call("analyze", path, "--no-meta")
    second = call("analyze", path, "--no-meta", "--jobs", "2")
    assert first[0] == second[0] == EXIT_OK
    assert first[1] == second[1]


@pytest.mark.parametrize("fmt", ["markdown", "csv"])
def test_analyze_text_formats_are_stable_with_metadata(fmt, feed_file):
    path = str(feed_file([feed_row(1, "http://67.210.122.222/apple/login"), feed_row(2, "http://www.g0og1e.com")]))
    first = call("analyze", path, "--format", fmt)
    second = call("analyze", path, "--format", fmt, "--jobs", "2")
    assert first[0] == second[0] == EXIT_OK
    assert first[1] == second[1]
    assert "generated_at" not in first[1] and path not in first[1]


def test_analyze_bundled_wordlist_key(feed_file, tmp_path):
    path = str(feed_file([feed_row(1, "http://paypal-bonus.example.com/free")]))
    own = tmp_path / "mine.txt"
    own.write_text("bonus\n", encoding="utf-8")
    code, out, _ = call("analyze", path, "--wordlist", "le", "--wordlist", str(own), "--format", "json", "--no-meta")
    assert code == EXIT_OK
    keys = [t["key"] for t in json.loads(out)["tables"]]
    assert "T4" in keys and "W:mine" in keys
    assert "T3" not in keys

    code, _, _ = call("analyze", path, "--wordlist", "no-such-list")
    assert code == EXIT_USAGE


def test_analyze_metadata(feed_file):
    path = feed_file([feed_row(1, "http://a.com/")])
    code, out, _ = call("analyze", str(path), "--format", "json")
    assert code == EXIT_OK
    meta = json.loads(out)["metadata"]
    assert meta["input"] == str(path)
    assert meta["schema_version"] == 1
    assert meta["ingest"]["records_ok"] == 1
    assert "generated_at" in meta and "config_digest" in meta


def test_analyze_skips_malformed_rows(feed_file):
    rows = []
    for i in range(1, 11):
        rows.append(feed_row(i, "" if i % 10 in (3, 6, 9) else f"http://site{i}.example.com/"))
    code, out, err = call("analyze", str(feed_file(rows)), "--format", "json", "--no-meta")
    assert code == EXIT_OK
    t1 = next(t for t in json.loads(out)["tables"] if t["key"] == "T1")
    assert t1["rows"][0][2] == 7
    assert "EmptyUrl" in err


def test_record_filters(feed_file):
    rows = [feed_row(1, "https://a.example.com/", year=2014), feed_row(2, "https://b.example.com/", year=2016),
            feed_row(3, "http://c.example.com/", year=2017, target="PayPal")]
    path = str(feed_file(rows))
    code, out, _ = call("trend", path, "--feature", "https", "--format", "csv", "--years", "2015-2019")
    assert code == EXIT_OK
    assert out.splitlines() == ["year,https,total,percentage", "2017,0,1,0.00%", "2016,1,1,100.00%"]

    code, out, _ = call("trend", path, "--feature", "https", "--format", "csv", "--with-target")
    assert out.splitlines()[1:] == ["2017,0,1,0.00%"]


def test_lexicon_table5(table5_csv):
    code, out, _ = call("lexicon", str(table5_csv), "--top", "11")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "token,url_count,percentage"
    assert lines[1] == "login,1328,13.177%"
    assert lines[2] == "account,508,5.040%"
    assert len(lines) == 12


def test_lexicon_min_len(table5_csv):
    code, out, _ = call("lexicon", str(table5_csv), "--top", "3", "--min-len", "7")
    assert code == EXIT_OK
    tokens = [line.split(",")[0] for line in out.splitlines()[1:]]
    assert tokens == ["account", "content", "include"]


def test_lexicon_single_url(feed_file):
    code, out, _ = call("lexicon", str(feed_file([feed_row(1, "http://alpha.beta/gamma")])), "--top", "1")
    assert code == EXIT_OK
    assert out.splitlines()[1] == "alpha,1,100.000%"


def test_lexicon_empty(feed_file):
    code, _, _ = call("lexicon", str(feed_file([])))
    assert code == EXIT_DATA


def test_trend_https(yearly_csv):
    code, out, _ = call("trend", str(yearly_csv), "--feature", "https", "--format", "json")
    assert code == EXIT_OK
    rows = json.loads(out)["rows"]
    assert rows[-1] == [2015, 3, 233, "1.28%"]
    assert rows[3] == [2016, 16, 488, "3.27%"]


def test_trend_idn(yearly_csv):
    code, out, _ = call("trend", str(yearly_csv), "--feature", "idn", "--format", "json")
    assert code == EXIT_OK
    assert [(r[0], r[1]) for r in json.loads(out)["rows"]] == [(2019, 12), (2018, 8), (2017, 1), (2016, 1), (2015, 0)]


def test_trend_single_year(feed_file):
    code, out, _ = call("trend", str(feed_file([feed_row(1, "https://a.com/")])), "--feature", "https")
    assert code == EXIT_OK
    assert out.count("| 2019 |") == 1


def test_rounding_flag(yearly_csv):
    code, out, _ = call("trend", str(yearly_csv), "--feature", "https", "--format", "csv", "--rounding", "half-up")
    assert code == EXIT_OK
    assert out.splitlines()[-1] == "2015,3,233,1.29%"


def test_config_file_and_environment(table5_csv, tmp_path, monkeypatch):
    config = tmp_path / "phishcensus.conf"
    config.write_text("# overrides\ntop = 3\nformat=csv\n", encoding="utf-8")
    monkeypatch.setenv("PHISHCENSUS_TOP", "5")

    code, out, _ = call("lexicon", str(table5_csv))
    assert len(out.splitlines()) == 6

    code, out, _ = call("lexicon", str(table5_csv), "--config", str(config))
    assert len(out.splitlines()) == 4

    code, out, _ = call("lexicon", str(table5_csv), "--config", str(config), "--top", "2")
    assert len(out.splitlines()) == 3


def test_bad_config_file(tmp_path):
    config = tmp_path / "bad.conf"
    config.write_text("colour = blue\n", encoding="utf-8")
    code, _, err = call("classify", "http://a.com", "--config", str(config))
    assert code == EXIT_USAGE
    assert "unknown key" in err


def test_fetch(feed_server, feed_file, tmp_path):
    base, routes = feed_server
    routes["/feed.csv"] = ("text/csv", feed_file([feed_row(1, "http://a.com/")]).read_bytes())
    routes["/page.html"] = ("text/html", b"<html></html>")
    destination = tmp_path / "saved.csv"

    code, out, _ = call("fetch", base + "/feed.csv", "-o", str(destination))
    assert code == EXIT_OK
    assert json.loads(out)["saved"] == str(destination)

    code, _, _ = call("fetch", base + "/page.html", "-o", str(tmp_path / "other.csv"))
    assert code == EXIT_DATA

    code, _, err = call("fetch", base + "/feed.csv", "-o", str(tmp_path))
    assert code == EXIT_DATA
    assert "Traceback" not in err
    assert not tmp_path.with_name(tmp_path.name + ".part").exists()


def test_fetch_uses_environment_endpoint(feed_server, feed_file, tmp_path, monkeypatch):
    base, routes = feed_server
    routes["/mirror.csv"] = ("text/csv", feed_file([feed_row(1, "http://a.com/")]).read_bytes())
    monkeypatch.setenv("PHISHCENSUS_FEED_URL", base + "/mirror.csv")
    code, _, _ = call("fetch", "-o", str(tmp_path / "saved.csv"))
    assert code == EXIT_OK


def test_fetch_unreachable(tmp_path):
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
    code, _, _ = call("fetch", f"http://127.0.0.1:{port}/x.csv", "-o", str(tmp_path / "x.csv"), "--timeout", "2")
    assert code == EXIT_UNAVAILABLE


def test_parse_years():
    assert parse_years("2015-2019") == (2015, 2019)
    assert parse_years("2019") == (2019, 2019)
    assert parse_years(None) == (None, None)
    with pytest.raises(ConfigError):
        parse_years("recent")
