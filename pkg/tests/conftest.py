"""Shared fixtures: a small synthetic corpus reused across the suite."""

from __future__ import annotations

import pytest

from ecgxai.records import load_manifest
from ecgxai.synth import generate_corpus, load_corpus


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """24 two-class records plus their manifest, generated once per session."""
    root = tmp_path_factory.mktemp("corpus")
    generate_corpus(root, n=24, n_classes=2, seed=11)
    manifest = load_manifest(root / "manifest.csv")
    records = load_corpus(manifest)
    return manifest, records
