"""Resolve dataset source strings to loaded datasets."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Sequence, Union

from ..errors import ConfigurationError, FetchError
from .dataset import TabularDataset, load_csv
from .offline import OFFLINE_SOURCES
from .openml import load_openml

logger = logging.getLogger(__name__)


def load_source(source: str, cache_dir: Optional[Union[str, Path]] = None,
                target: Optional[str] = None) -> TabularDataset:
    """Load ``openml:<id>``, ``csv:<path>`` (needs ``target``) or one of the
    offline sources (``generator:waveform5000``, ``keel:phoneme``)."""
    kind, _, rest = source.partition(":")
    if kind == "openml":
        if not rest.isdigit():
            raise ConfigurationError(f"bad OpenML source {source!r}")
        return load_openml(int(rest), cache_dir)
    if kind == "csv":
        if not target:
            raise ConfigurationError("csv sources need a target column")
        ds = load_csv(rest, target)
        ds.provenance = {"source": source}
        return ds
    if source in OFFLINE_SOURCES:
        return OFFLINE_SOURCES[source]()
    raise ConfigurationError(f"unknown dataset source {source!r}")


def load_first_available(sources: Sequence[str], cache_dir=None, target=None) -> TabularDataset:
    """Try ``sources`` in order; fetch failures fall through to the next one."""
    errors = []
    for source in sources:
        try:
            ds = load_source(source, cache_dir, target)
        except FetchError as exc:
            logger.warning("source %s unavailable: %s", source, exc)
            errors.append(f"{source}: {exc}")
            continue
        if errors:
            ds.provenance["fallback_from"] = errors
        return ds
    raise FetchError("no dataset source available: " + "; ".join(errors))
