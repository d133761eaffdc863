"""OpenML download client with an on-disk cache.

Layout under the cache directory::

    openml/<id>/description.json   dataset description from the JSON API
    openml/<id>/data.arff          dataset file, MD5-checked against the description
    openml/<id>.lock               advisory lock serializing downloads of one id
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import urllib.error
import urllib.request
from pathlib import Path
from typing import Callable, Optional, Union

from filelock import FileLock

from ..errors import FetchError, IntegrityError
from .dataset import TabularDataset, load_arff

logger = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://api.openml.org"
Transport = Callable[[str], bytes]


def default_cache_dir() -> Path:
    env = os.environ.get("IGNNET_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "ignnet"


def urllib_transport(url: str, timeout: float = 60.0) -> bytes:
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return resp.read()


def _md5(data: bytes) -> str:
    return hashlib.md5(data).hexdigest()


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".part")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def fetch_openml(
    dataset_id: int,
    cache_dir: Optional[Union[str, Path]] = None,
    transport: Optional[Transport] = None,
    base_url: str = DEFAULT_BASE_URL,
) -> Path:
    """Return the local path of an OpenML dataset file, downloading on a miss.

    A warm cache is served without any network call. The cached file is
    re-hashed on every hit and must match the checksum recorded in the cached
    description.
    """
    if not isinstance(dataset_id, int) or dataset_id <= 0:
        raise ValueError(f"dataset id must be a positive integer, got {dataset_id!r}")
    root = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    folder = root / "openml" / str(dataset_id)
    desc_path = folder / "description.json"
    data_path = folder / "data.arff"
    folder.parent.mkdir(parents=True, exist_ok=True)

    with FileLock(str(root / "openml" / f"{dataset_id}.lock")):
        if desc_path.exists() and data_path.exists():
            desc = json.loads(desc_path.read_text())
            expected = desc.get("md5_checksum")
            if expected and _md5(data_path.read_bytes()) != expected:
                raise IntegrityError(f"cached file for OpenML {dataset_id} does not match its checksum")
            logger.debug("OpenML %d served from cache %s", dataset_id, data_path)
            return data_path

        get = transport or urllib_transport
        try:
            raw_desc = get(f"{base_url}/api/v1/json/data/{dataset_id}")
            desc = json.loads(raw_desc)["data_set_description"]
            payload = get(f"{base_url}/data/v1/download/{desc['file_id']}")
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise FetchError(f"could not download OpenML dataset {dataset_id}: {exc}") from None
        except (KeyError, ValueError) as exc:
            raise FetchError(f"malformed OpenML description for {dataset_id}: {exc}") from None
        expected = desc.get("md5_checksum")
        if expected and _md5(payload) != expected:
            raise IntegrityError(f"downloaded file for OpenML {dataset_id} fails its MD5 checksum")
        folder.mkdir(parents=True, exist_ok=True)
        _write_atomic(data_path, payload)
        _write_atomic(desc_path, json.dumps(desc, indent=1, sort_keys=True).encode())
        logger.info("OpenML %d (%s) cached at %s", dataset_id, desc.get("name"), data_path)
        return data_path


def load_openml(dataset_id: int, cache_dir: Optional[Union[str, Path]] = None,
                transport: Optional[Transport] = None, base_url: str = DEFAULT_BASE_URL) -> TabularDataset:
    """Fetch (or reuse) an OpenML dataset and parse it with its default target."""
    path = fetch_openml(dataset_id, cache_dir, transport, base_url)
    desc = json.loads((path.parent / "description.json").read_text())
    target = desc.get("default_target_attribute")
    if not target:
        raise FetchError(f"OpenML {dataset_id} has no default target attribute")
    ds = load_arff(path, target.split(",")[0], name=desc.get("name", f"openml-{dataset_id}"))
    ds.provenance = {"source": f"openml:{dataset_id}", "md5": desc.get("md5_checksum")}
    return ds
