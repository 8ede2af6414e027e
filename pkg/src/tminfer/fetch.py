"""Resolve hosted model URLs, download bundle files, and cache them on disk.

Cache layout: <cache_dir>/<sha256(base)>/{model.json, metadata.json,
weight shards..., entry.meta}. entry.meta is written last inside a staging
directory that is renamed into place, so a completed entry is atomic.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import urlparse

from filelock import FileLock

from .bundle import (
    ModelBundle,
    assemble_bundle,
    decode_weights,
    load_bundle_dir,
    parse_metadata,
    parse_topology,
)
from .errors import CacheCorrupt, FetchFailed, InvalidUrl

__all__ = [
    "BundleLocator",
    "resolve",
    "fetch_bundle",
    "open_model_ref",
    "purge",
    "default_cache_dir",
    "HttpTransport",
]

META_NAME = "entry.meta"


@dataclass(frozen=True)
class BundleLocator:
    base: str  # normalized, always ends in "/"
    model_url: str
    metadata_url: str
    weight_urls: tuple[str, ...] = ()


def resolve(base: str) -> BundleLocator:
    parsed = urlparse(base)
    if parsed.scheme not in ("http", "https", "file"):
        raise InvalidUrl(f"expected http(s) or file URL, got {base!r}")
    if not parsed.netloc and parsed.scheme != "file":
        raise InvalidUrl(f"URL has no host: {base!r}")
    norm = base if base.endswith("/") else base + "/"
    return BundleLocator(
        base=norm,
        model_url=norm + "model.json",
        metadata_url=norm + "metadata.json",
    )


def default_cache_dir() -> Path:
    env = os.environ.get("TMINFER_CACHE_DIR")
    if env:
        return Path(env)
    xdg = os.environ.get("XDG_CACHE_HOME")
    root = Path(xdg) if xdg else Path.home() / ".cache"
    return root / "tminfer"


class HttpTransport:
    """requests-backed transport: 30 s timeout, 2 retries with jittered backoff."""

    def __init__(self, timeout: float = 30.0, retries: int = 2):
        import requests

        self.timeout = timeout
        self.retries = retries
        self._session = requests.Session()

    def get(self, url: str) -> bytes:
        import requests

        last = None
        for attempt in range(self.retries + 1):
            try:
                resp = self._session.get(url, timeout=self.timeout)
                resp.raise_for_status()
                return resp.content
            except requests.RequestException as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep((2 ** attempt) * 0.5 * (1 + random.random()))
        raise FetchFailed(url, str(last))


class FileTransport:
    def get(self, url: str) -> bytes:
        path = urlparse(url).path
        try:
            return Path(path).read_bytes()
        except OSError as exc:
            raise FetchFailed(url, str(exc)) from exc


def _transport_for(locator: BundleLocator, transport):
    if transport is not None:
        return transport
    if locator.base.startswith("file:"):
        return FileTransport()
    return HttpTransport()


def _write_bytes(path: Path, data: bytes):
    # single choke point so tests can inject write faults
    path.write_bytes(data)


def cache_key(base: str) -> str:
    return hashlib.sha256(base.encode("utf-8")).hexdigest()


def _entry_complete(entry_dir: Path) -> bool:
    return (entry_dir / META_NAME).is_file()


def _load_cached(entry_dir: Path) -> ModelBundle:
    meta = json.loads((entry_dir / META_NAME).read_text())
    for fname, size in meta["sizes"].items():
        f = entry_dir / fname
        if not f.is_file() or f.stat().st_size != size:
            raise CacheCorrupt(f"cached file {fname} missing or wrong size")
    return load_bundle_dir(entry_dir)


def _download_into(locator: BundleLocator, transport, dest: Path) -> dict[str, int]:
    """Fetch model.json first to learn weight paths, then the rest."""
    model_bytes = transport.get(locator.model_url)
    _, manifest = parse_topology(model_bytes)
    weight_paths: list[str] = []
    for _, src in manifest:
        for p in src.split("\x00"):
            if p not in weight_paths:
                weight_paths.append(p)
    meta_bytes = transport.get(locator.metadata_url)
    parse_metadata(meta_bytes)  # fail before writing anything on bad metadata

    sizes: dict[str, int] = {}
    _write_bytes(dest / "model.json", model_bytes)
    sizes["model.json"] = len(model_bytes)
    _write_bytes(dest / "metadata.json", meta_bytes)
    sizes["metadata.json"] = len(meta_bytes)
    for p in weight_paths:
        blob = transport.get(locator.base + p)
        target = dest / p
        target.parent.mkdir(parents=True, exist_ok=True)
        _write_bytes(target, blob)
        sizes[p] = len(blob)
    return sizes


def fetch_bundle(locator: BundleLocator, cache_dir=None, *,
                 prefer_cache: bool = True, refresh: bool = False,
                 transport=None) -> ModelBundle:
    transport = _transport_for(locator, transport)
    if locator.base.startswith("file:"):
        # local bundles read straight from disk, no cache involved
        return load_bundle_dir(urlparse(locator.base).path)

    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = cache_key(locator.base)
    entry_dir = cache_dir / key
    lock = FileLock(str(cache_dir / f"{key}.lock"))
    with lock:
        if prefer_cache and not refresh and _entry_complete(entry_dir):
            try:
                return _load_cached(entry_dir)
            except CacheCorrupt:
                shutil.rmtree(entry_dir, ignore_errors=True)
        # stage in a temp sibling, meta written last, then atomic rename
        staging = Path(tempfile.mkdtemp(dir=cache_dir, prefix=f".{key[:12]}-"))
        try:
            sizes = _download_into(locator, transport, staging)
            meta = {
                "base_url": locator.base,
                "sizes": sizes,
                "fetched_at": time.time(),
            }
            _write_bytes(staging / META_NAME, json.dumps(meta, indent=2).encode())
            if entry_dir.exists():
                shutil.rmtree(entry_dir)
            os.replace(staging, entry_dir)
        except BaseException:
            shutil.rmtree(staging, ignore_errors=True)
            raise
        return _load_cached(entry_dir)


def open_model_ref(ref: str, cache_dir=None, *, prefer_cache: bool = True,
                   refresh: bool = False, transport=None) -> ModelBundle:
    """Load a bundle from a local directory, file:// URL, or hosted base URL."""
    if ref.startswith("file:"):
        return load_bundle_dir(urlparse(ref).path)
    scheme = urlparse(ref).scheme
    if scheme in ("http", "https"):
        return fetch_bundle(resolve(ref), cache_dir, prefer_cache=prefer_cache,
                            refresh=refresh, transport=transport)
    return load_bundle_dir(ref)


def purge(cache_dir=None, key: str | None = None) -> int:
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    if not cache_dir.is_dir():
        return 0
    removed = 0
    for entry in cache_dir.iterdir():
        if not entry.is_dir() or entry.name.startswith("."):
            continue
        if key is not None and entry.name != key:
            continue
        shutil.rmtree(entry)
        (cache_dir / f"{entry.name}.lock").unlink(missing_ok=True)
        removed += 1
    return removed
