"""Multi-agent question answering over PDF corpora.

Thin wrapper over the native ``_polydoc`` module. JSON-shaped results come
back as plain dicts and lists.
"""

import json as _json
import os as _os

from ._polydoc import (
    DEFAULT_DPI,
    DEFAULT_MAX_NEW_TOKENS,
    DEFAULT_TOP_K,
    Error,
    default_evaluation_prompt,
    default_prompt,
    fill_evaluation_prompt,
    late_interaction_score,
    parse_answer,
    parse_correctness,
    parse_critical,
    run_cli,
    top_k,
)
from . import _polydoc

__all__ = [
    "DEFAULT_DPI",
    "DEFAULT_MAX_NEW_TOKENS",
    "DEFAULT_TOP_K",
    "Error",
    "aggregate",
    "build_corpus",
    "default_config",
    "default_evaluation_prompt",
    "default_prompt",
    "fill_evaluation_prompt",
    "late_interaction_score",
    "load_corpus",
    "load_dataset",
    "parse_answer",
    "parse_correctness",
    "parse_critical",
    "run_cli",
    "top_k",
    "validate_config",
]


def build_corpus(manifest, corpus_dir, dpi=DEFAULT_DPI, workers=0):
    """Ingest the PDFs listed in ``manifest`` into ``corpus_dir``."""
    return _json.loads(_polydoc._build_corpus(_os.fspath(manifest), _os.fspath(corpus_dir), dpi, workers))


def load_corpus(corpus_dir):
    return _json.loads(_polydoc._load_corpus(_os.fspath(corpus_dir)))


def load_dataset(path):
    return _json.loads(_polydoc._load_dataset(_os.fspath(path)))


def aggregate(items):
    """Report for item dicts with ``item_id``, ``status`` ("judged", "failed"
    or "unevaluated"), ``correctness`` for judged items and optional
    ``categories``."""
    return _json.loads(_polydoc._aggregate(_json.dumps(list(items))))


def default_config():
    return _json.loads(_polydoc._default_config())


def validate_config(document, base_dir=""):
    """Validates a config dict; returns its reproducibility snapshot."""
    return _json.loads(_polydoc._validate_config(_json.dumps(document), _os.fspath(base_dir)))
