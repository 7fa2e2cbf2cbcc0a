"""Rate-limited, cache-first HTTP client for radar frame downloads.

The upstream API allows only a limited number of requests per hour, so the
client checks a local file cache first, tracks request times in a small log
inside the cache directory, and stops with a partial-result marker once the
hourly budget is spent. Cache hits never touch the network.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import requests

from .errors import AuthError, FetchError

API_KEY_ENV = "NOWCAST_API_KEY"
REQUEST_LOG = ".request_log"


@dataclass
class FetchConfig:
    base_url: str
    cache_dir: Path
    budget_per_hour: int = 10
    api_key_env: str = API_KEY_ENV
    api_key_header: str = "X-Api-Key"
    path_template: str = "frames/{ts}.png"
    max_retries: int = 3
    backoff_seconds: float = 1.0
    timeout: float = 30.0

    def __post_init__(self):
        self.cache_dir = Path(self.cache_dir)
        if self.budget_per_hour < 1:
            raise ValueError(f"budget_per_hour must be >= 1, got {self.budget_per_hour}")


@dataclass
class FetchResult:
    paths: list[Path]
    partial: bool = False
    missing: list[datetime] = field(default_factory=list)
    requests_made: int = 0


def _default_get(url: str, headers: dict, timeout: float):
    resp = requests.get(url, headers=headers, timeout=timeout)
    return resp.status_code, resp.content


def _recent_requests(log_path: Path, now: float) -> list[float]:
    if not log_path.exists():
        return []
    times = [float(line) for line in log_path.read_text().split() if line]
    return [t for t in times if now - t < 3600.0]


def fetch_frames(
    cfg: FetchConfig,
    start: datetime,
    end: datetime,
    cadence: timedelta = timedelta(minutes=5),
    http_get=None,
    sleep=time.sleep,
    clock=time.time,
) -> FetchResult:
    """Download every frame in [start, end) at the cadence.

    Cached frames are returned without network calls. When the hourly budget
    runs out, the remaining timestamps are reported in ``missing`` and the
    result is marked partial. Auth failures raise immediately with no cache
    write; transient failures are retried with backoff, then raise."""
    if start >= end:
        raise ValueError("fetch window start must precede end")
    key = os.environ.get(cfg.api_key_env)
    if not key:
        raise AuthError(f"missing API credential in environment variable {cfg.api_key_env}")
    http_get = http_get or _default_get
    cfg.cache_dir.mkdir(parents=True, exist_ok=True)
    log_path = cfg.cache_dir / REQUEST_LOG

    wanted = []
    t = start
    while t < end:
        wanted.append(t)
        t = t + cadence

    now = clock()
    request_times = _recent_requests(log_path, now)
    result = FetchResult(paths=[])
    for ts in wanted:
        stamp = ts.strftime("%Y%m%dT%H%M%S")
        cached = cfg.cache_dir / f"{stamp}.png"
        if cached.exists():
            result.paths.append(cached)
            continue
        if len(request_times) >= cfg.budget_per_hour:
            result.partial = True
            result.missing.append(ts)
            continue
        url = cfg.base_url.rstrip("/") + "/" + cfg.path_template.format(ts=stamp)
        headers = {cfg.api_key_header: key}
        body = None
        for attempt in range(cfg.max_retries + 1):
            try:
                status, content = http_get(url, headers, cfg.timeout)
            except Exception as exc:
                if attempt == cfg.max_retries:
                    raise FetchError(f"request for {url} failed after retries: {exc}") from exc
                sleep(cfg.backoff_seconds * 2**attempt)
                continue
            if status in (401, 403):
                raise AuthError(f"API rejected credential for {url} (HTTP {status})")
            if status == 200:
                body = content
                break
            if attempt == cfg.max_retries:
                raise FetchError(f"request for {url} failed with HTTP {status} after retries")
            sleep(cfg.backoff_seconds * 2**attempt)
        request_times.append(clock())
        result.requests_made += 1
        log_path.write_text("\n".join(f"{t:.3f}" for t in request_times))
        cached.write_bytes(body)
        result.paths.append(cached)
    return result
