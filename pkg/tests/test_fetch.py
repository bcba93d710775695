from __future__ import annotations

import json

import pytest

from crowdrev.fetch import MANIFEST_NAME, FetchError, MissingTokenError, fetch_corpus


class Resp:
    def __init__(self, status=200, payload=None, content=b"", headers=None):
        self.status_code = status
        self._payload = payload
        self.content = content
        self.headers = headers or {}

    def json(self):
        return self._payload


class StubClient:
    """Serves one search page and raw blobs; ``script`` prepends canned failures."""

    def __init__(self, blobs: dict[str, bytes], script=None):
        self.blobs = blobs
        self.script = list(script or [])
        self.calls = []

    def get(self, url, params=None, headers=None, timeout=None):
        self.calls.append((url, params, headers))
        if self.script:
            r = self.script.pop(0)
            if isinstance(r, Exception):
                raise r
            return r
        if url.endswith("/search/code"):
            if params["page"] > 1:
                return Resp(payload={"items": []})
            items = [
                {"repository": {"full_name": "o/r"}, "path": f"src/{name}", "url": f"blob://{name}",
                 "sha": f"sha{i}", "html_url": f"https://example.test/{name}"}
                for i, name in enumerate(self.blobs)
            ]
            return Resp(payload={"items": items})
        return Resp(content=self.blobs[url.removeprefix("blob://")])


def blobs(n, size=2000):
    return {f"F{i}.java": bytes([65 + i]) * size for i in range(n)}


def test_saves_files_and_manifest(tmp_path):
    client = StubClient(blobs(5))
    res = fetch_corpus("lang:java", tmp_path, token="t", client=client, sleep=lambda s: None)
    assert len(res.saved) == 5
    assert all(p.read_bytes() == b * 1 for p, b in zip(res.saved, blobs(5).values()))
    lines = [json.loads(x) for x in (tmp_path / MANIFEST_NAME).read_text().splitlines()]
    assert [x["path"] for x in lines] == [f"src/F{i}.java" for i in range(5)]
    assert {"file", "repo", "path", "sha", "url", "retrieved_at", "bytes"} <= set(lines[0])
    assert "size:1000..10000" in client.calls[0][1]["q"]
    assert client.calls[0][2]["Authorization"] == "Bearer t"


def test_out_of_range_size_excluded(tmp_path):
    files = blobs(3)
    files["Big.java"] = b"x" * 20_000
    res = fetch_corpus("q", tmp_path, token="t", client=StubClient(files))
    assert len(res.saved) == 3 and res.skipped_size == 1
    assert not (tmp_path / "o__r__src__Big.java").exists()


def test_refetch_skips_known_files(tmp_path):
    fetch_corpus("q", tmp_path, token="t", client=StubClient(blobs(2)))
    res = fetch_corpus("q", tmp_path, token="t", client=StubClient(blobs(3)))
    assert len(res.saved) == 1 and res.skipped_existing == 2
    assert len((tmp_path / MANIFEST_NAME).read_text().splitlines()) == 3


def test_retries_with_backoff(tmp_path):
    waits = []
    script = [Resp(429, headers={"Retry-After": "7"}), Resp(502), OSError("reset")]
    res = fetch_corpus("q", tmp_path, token="t", client=StubClient(blobs(1), script),
                       sleep=waits.append, backoff=1.0)
    assert len(res.saved) == 1
    assert waits == [7.0, 2.0, 4.0]


def test_gives_up_after_retries(tmp_path):
    script = [Resp(503)] * 3
    with pytest.raises(FetchError, match="server error 503"):
        fetch_corpus("q", tmp_path, token="t", client=StubClient(blobs(1), script),
                     retries=2, sleep=lambda s: None)


def test_auth_failures(tmp_path):
    with pytest.raises(FetchError, match="401"):
        fetch_corpus("q", tmp_path, token="bad", client=StubClient(blobs(1), [Resp(401)]))
    with pytest.raises(MissingTokenError):
        fetch_corpus("q", tmp_path, token=None, client=StubClient({}))


def test_max_files_respected(tmp_path):
    res = fetch_corpus("q", tmp_path, token="t", client=StubClient(blobs(6)), max_files=4)
    assert len(res.saved) == 4
