"""Dataset manifest, download cache and synthetic generators.

Manifest entries are data (``manifest.json``); each names a URL, how to
parse it, which columns to drop and the shape expected afterwards.
Downloaded files are cached per dataset under the cache directory, which
defaults to ``$MDAE_CACHE_DIR`` or the user cache location.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
import time
import urllib.request
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from .data import DataMatrix, read_csv, write_csv

log = logging.getLogger(__name__)

CACHE_ENV = "MDAE_CACHE_DIR"


class FetchError(RuntimeError):
    pass


class ShapeMismatch(FetchError):
    pass


class ChecksumMismatch(FetchError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    url: str
    expected_shape: tuple[int, int]
    delimiter: str = ","
    header: bool = False
    drop_columns: tuple[int, ...] = ()
    title: str = ""
    sha256: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        return cls(
            name=d["name"],
            url=d["url"],
            expected_shape=tuple(d["expected_shape"]),
            delimiter=d.get("delimiter", ","),
            header=bool(d.get("header", False)),
            drop_columns=tuple(d.get("drop_columns", ())),
            title=d.get("title", ""),
            sha256=d.get("sha256"),
        )


@dataclass(frozen=True)
class SyntheticEntry:
    name: str
    rank: int
    n: int
    p: int
    noise_sd: float = 0.0
    seed: int = 0

    def generate(self) -> DataMatrix:
        return make_low_rank(self.n, self.p, self.rank, self.noise_sd, self.seed)


@dataclass
class Manifest:
    datasets: dict[str, ManifestEntry] = field(default_factory=dict)
    synthetic: dict[str, SyntheticEntry] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        ds = {e["name"]: ManifestEntry.from_dict(e) for e in d.get("datasets", [])}
        syn = {e["name"]: SyntheticEntry(**e) for e in d.get("synthetic", [])}
        return cls(ds, syn)

    @property
    def names(self) -> list[str]:
        return [*self.datasets, *self.synthetic]


def load_manifest(path: str | Path | None = None) -> Manifest:
    if path is None:
        text = resources.files(__package__).joinpath("manifest.json").read_text()
    else:
        text = Path(path).read_text()
    return Manifest.from_dict(json.loads(text))


def default_cache_dir() -> Path:
    if os.environ.get(CACHE_ENV):
        return Path(os.environ[CACHE_ENV])
    base = os.environ.get("XDG_CACHE_HOME") or Path.home() / ".cache"
    return Path(base) / "mdae_impute"


def make_low_rank(n: int, p: int, rank: int, noise_sd: float = 0.0, seed: int = 0) -> DataMatrix:
    """``U V^T + noise`` with standard-normal factors; ``rank=0`` gives pure noise."""
    rng = np.random.default_rng(seed)
    x = np.zeros((n, p))
    if rank > 0:
        x += rng.standard_normal((n, rank)) @ rng.standard_normal((rank, p))
    if noise_sd > 0:
        x += noise_sd * rng.standard_normal((n, p))
    return DataMatrix(x, column_names=[f"x{j}" for j in range(p)])


def parse_table(raw: bytes, entry: ManifestEntry) -> DataMatrix:
    """Parse a downloaded file per the entry's hints and drop label/ID columns."""
    lines = raw.decode("utf-8", errors="replace").splitlines()
    rows = []
    header = None
    for line in lines:
        if not line.strip():
            continue
        fields = line.split() if entry.delimiter == "whitespace" else line.split(entry.delimiter)
        fields = [f.strip().strip('"') for f in fields]
        if entry.header and header is None:
            header = fields
            continue
        rows.append(fields)
    width = len(rows[0]) if rows else 0
    keep = [j for j in range(width) if j not in entry.drop_columns]
    try:
        data = np.array([[float(r[j]) for j in keep] for r in rows])
    except (ValueError, IndexError) as exc:
        raise FetchError(f"{entry.name}: cannot parse numeric table ({exc})") from None
    names = [header[j] for j in keep] if header and len(header) == width else [f"x{j}" for j in keep]
    return DataMatrix(data, column_names=names)


def _download(url: str, opener: Callable, retries: int, backoff: float) -> bytes:
    last = None
    for attempt in range(retries):
        try:
            with opener(url, timeout=60) as resp:
                return resp.read()
        except OSError as exc:
            last = exc
            log.warning("download of %s failed (attempt %d/%d): %s", url, attempt + 1, retries, exc)
            if attempt + 1 < retries:
                time.sleep(backoff * 2**attempt)
    raise FetchError(f"could not download {url} after {retries} attempts: {last}")


def cached_path(entry_name: str, cache_dir: str | Path | None = None) -> Path:
    return Path(cache_dir or default_cache_dir()) / entry_name / f"{entry_name}.csv"


def fetch(
    entry: ManifestEntry,
    cache_dir: str | Path | None = None,
    *,
    opener: Callable = urllib.request.urlopen,
    retries: int = 3,
    backoff: float = 1.0,
) -> Path:
    """Return the cached, preprocessed CSV for ``entry``, downloading it on a cache miss.

    Nothing is written to the cache unless the checksum (if any) and the
    post-preprocessing shape match the manifest.
    """
    target = cached_path(entry.name, cache_dir)
    if target.exists():
        return target
    raw = _download(entry.url, opener, retries, backoff)
    if entry.sha256 and hashlib.sha256(raw).hexdigest() != entry.sha256:
        raise ChecksumMismatch(f"{entry.name}: checksum mismatch for {entry.url}")
    m = parse_table(raw, entry)
    if m.shape != tuple(entry.expected_shape):
        raise ShapeMismatch(f"{entry.name}: got shape {m.shape}, manifest expects {tuple(entry.expected_shape)}")
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_suffix(".tmp")
    write_csv(m, tmp)
    tmp.replace(target)
    return target


def load_dataset(name: str, cache_dir: str | Path | None = None, manifest: Manifest | None = None) -> DataMatrix:
    """A synthetic dataset, a cached/downloaded manifest dataset, or a CSV path."""
    manifest = manifest or load_manifest()
    if name in manifest.synthetic:
        return manifest.synthetic[name].generate()
    if name in manifest.datasets:
        return read_csv(fetch(manifest.datasets[name], cache_dir))
    if Path(name).exists():
        return read_csv(name)
    raise KeyError(f"unknown dataset {name!r}; known: {manifest.names}")
