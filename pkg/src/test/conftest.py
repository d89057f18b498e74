import csv
import os
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from dataset import PHISHTANK_COLUMNS  # noqa: E402
from detectors import DetectorConfig  # noqa: E402
from resources import resources  # noqa: E402
from url_model import PublicSuffixSnapshot  # noqa: E402

TOY_SUFFIXES = """\
// toy list for longest-match tests
uk
co.uk
com
"""


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the 10^6-row streaming test")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def suffixes():
    """The bundled suffix snapshot"""
    return resources.suffix_snapshot()


@pytest.fixture(scope="session")
def detector_config(suffixes):
    return DetectorConfig(suffixes=suffixes, brand_list=resources.default_brands())


@pytest.fixture
def toy_suffixes(tmp_path):
    path = tmp_path / "toy_suffixes.dat"
    path.write_text(TOY_SUFFIXES, encoding="utf-8")
    return PublicSuffixSnapshot(path)


def feed_row(phish_id, url, year=2019, verified="yes", online="yes", target="Other", stamp=None):
    """One PhishTank row in header order"""
    submitted = stamp or f"{year}-03-01T10:00:00+00:00"
    return [str(phish_id), url, f"http://www.phishtank.com/phish_detail.php?phish_id={phish_id}",
            submitted, verified, submitted, online, target]


def write_feed(path: Path, rows, header=PHISHTANK_COLUMNS) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    return path


@pytest.fixture
def feed_file(tmp_path):
    """Factory: feed_file(rows, name='feed.csv') -> path of a PhishTank CSV"""
    def make(rows, name="feed.csv", header=PHISHTANK_COLUMNS):
        return write_feed(tmp_path / name, rows, header)
    return make


# Token -> number of URLs containing it, as printed for the 10078-URL feed of 2019-05-05
TABLE5_COUNTS = {
    "login": 1328, "account": 508, "content": 505, "include": 496, "online": 478, "sites": 461,
    "admin": 455, "email": 431, "secur": 422, "image": 394, "update": 304,
}
TABLE5_TOTAL = 10078

# year -> (https URLs, IDN URLs, all URLs of the year)
YEARLY_COUNTS = {
    2019: (1477, 12, 3930),
    2018: (1543, 8, 4068),
    2017: (182, 1, 1249),
    2016: (16, 1, 488),
    2015: (3, 0, 233),
}


def table5_urls():
    """10078 URLs; URL i carries every token whose count exceeds i, other tokens are short or unique"""
    urls = []
    for i in range(TABLE5_TOTAL):
        words = [token for token, count in TABLE5_COUNTS.items() if i < count]
        urls.append("http://x.io/" + "/".join(words + [str(i)]))
    return urls


def table5_rows():
    return [feed_row(i + 1, url) for i, url in enumerate(table5_urls())]


def yearly_rows():
    rows = []
    phish_id = 0
    for year, (https, idn, total) in YEARLY_COUNTS.items():
        for i in range(total):
            phish_id += 1
            if i < https:
                url = f"https://secure{i}.example.com/login"
            elif i < https + idn:
                url = f"http://www.xn--pple-43d.com/{i}"
            else:
                url = f"http://site{i}.example.org/"
            stamp = "2019-05-05T08:00:00+00:00" if (year == 2019 and i == 0) else None
            rows.append(feed_row(phish_id, url, year=year, stamp=stamp))
    return rows


@pytest.fixture
def feed_server(monkeypatch):
    """Local HTTP server; register bodies in the returned dict by path"""
    monkeypatch.setenv("NO_PROXY", "127.0.0.1,localhost")
    routes = {}

    class Handler(BaseHTTPRequestHandler):
        def do_GET(self):
            if self.path not in routes:
                self.send_error(404)
                return
            content_type, body = routes[self.path]
            self.send_response(200)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}", routes
    server.shutdown()
    server.server_close()
