"""Download source files from GitHub code search to use as review inputs."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Protocol

log = logging.getLogger(__name__)

API_ROOT = "https://api.github.com"
TOKEN_ENV = "CROWDREV_GITHUB_TOKEN"
MANIFEST_NAME = "manifest.jsonl"
MAX_SEARCH_PAGES = 10  # code search serves at most 1000 results


class FetchError(RuntimeError):
    def __init__(self, message: str, saved: int = 0):
        self.saved = saved
        super().__init__(f"{message} ({saved} files saved before the failure)")


class MissingTokenError(FetchError):
    def __init__(self) -> None:
        RuntimeError.__init__(
            self,
            f"no GitHub token: export {TOKEN_ENV}=<personal access token> "
            "(code search requires authentication)",
        )
        self.saved = 0


class HttpClient(Protocol):
    def get(self, url: str, params: dict | None = None, headers: dict | None = None,
            timeout: float | None = None) -> Any: ...


@dataclass
class FetchResult:
    saved: list[Path] = field(default_factory=list)
    skipped_size: int = 0
    skipped_existing: int = 0


def _safe_name(repo: str, path: str) -> str:
    return f"{repo}/{path}".replace("/", "__")


class _Fetcher:
    def __init__(self, client: HttpClient, token: str, retries: int, backoff: float,
                 sleep: Callable[[float], None], timeout: float):
        self.client = client
        self.headers = {"Authorization": f"Bearer {token}", "X-GitHub-Api-Version": "2022-11-28"}
        self.retries = retries
        self.backoff = backoff
        self.sleep = sleep
        self.timeout = timeout
        self.saved = 0

    def get(self, url: str, params: dict | None = None, accept: str = "application/vnd.github+json"):
        headers = {**self.headers, "Accept": accept}
        for attempt in range(self.retries + 1):
            last = attempt == self.retries
            try:
                resp = self.client.get(url, params=params, headers=headers, timeout=self.timeout)
            except OSError as exc:  # requests' ConnectionError derives from OSError
                if last:
                    raise FetchError(f"network error on {url}: {exc}", self.saved) from exc
                self.sleep(self.backoff * 2**attempt)
                continue
            status = resp.status_code
            if status == 401:
                raise FetchError("GitHub rejected the token (401)", self.saved)
            limited = status == 429 or (
                status == 403 and resp.headers.get("X-RateLimit-Remaining") == "0"
            )
            if limited or status >= 500:
                if last:
                    what = "rate limit exhausted" if limited else f"server error {status}"
                    raise FetchError(f"{what} on {url}", self.saved)
                wait = float(resp.headers.get("Retry-After", self.backoff * 2**attempt))
                log.info("HTTP %d from %s, retrying in %.1fs", status, url, wait)
                self.sleep(wait)
                continue
            if status >= 400:
                raise FetchError(f"HTTP {status} on {url}", self.saved)
            return resp
        raise AssertionError("unreachable")


def fetch_corpus(
    query: str,
    dest: str | Path,
    size_low: int = 1000,
    size_high: int = 10_000,
    token: str | None = None,
    client: HttpClient | None = None,
    max_files: int = 100,
    retries: int = 4,
    backoff: float = 2.0,
    sleep: Callable[[float], None] = time.sleep,
    timeout: float = 30.0,
) -> FetchResult:
    """Search GitHub code for ``query`` and save files of ``size_low``..``size_high`` bytes.

    Each saved file gets a line in ``manifest.jsonl`` naming its repository,
    path, blob sha and retrieval time. Files already listed are not fetched
    again.
    """
    if not token:
        raise MissingTokenError()
    if size_low > size_high:
        raise ValueError(f"size_low {size_low} > size_high {size_high}")
    if client is None:
        import requests

        client = requests.Session()
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    manifest = dest / MANIFEST_NAME
    known = set()
    if manifest.exists():
        for line in manifest.read_text(encoding="utf-8").splitlines():
            if line.strip():
                known.add(json.loads(line)["file"])

    f = _Fetcher(client, token, retries, backoff, sleep, timeout)
    result = FetchResult()
    q = f"{query} size:{size_low}..{size_high}"
    page = 1
    with manifest.open("a", encoding="utf-8") as man:
        while len(result.saved) < max_files and page <= MAX_SEARCH_PAGES:
            resp = f.get(f"{API_ROOT}/search/code", {"q": q, "per_page": 100, "page": page})
            items = resp.json().get("items", [])
            if not items:
                break
            for item in items:
                if len(result.saved) >= max_files:
                    break
                repo = item["repository"]["full_name"]
                name = _safe_name(repo, item["path"])
                if name in known:
                    result.skipped_existing += 1
                    continue
                blob = f.get(item["url"], accept="application/vnd.github.raw").content
                if not size_low <= len(blob) <= size_high:
                    result.skipped_size += 1
                    continue
                path = dest / name
                path.write_bytes(blob)
                known.add(name)
                man.write(json.dumps({
                    "file": name,
                    "repo": repo,
                    "path": item["path"],
                    "sha": item.get("sha"),
                    "url": item.get("html_url"),
                    "retrieved_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                    "bytes": len(blob),
                }) + "\n")
                result.saved.append(path)
                f.saved += 1
            page += 1
    return result
