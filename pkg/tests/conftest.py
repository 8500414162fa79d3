"""Shared fixtures: a tiny two-page document, a small ledger, fixture paths."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tracereview import (
    STATUS_SUSPECTED,
    Anchor,
    BlockRecord,
    LedgerEntry,
    ingest_block_list,
)

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "tracereview" / "fixtures"


@pytest.fixture
def demo_dir() -> Path:
    return FIXTURES / "demo"


@pytest.fixture
def eval_dir() -> Path:
    return FIXTURES / "eval"


def block(page, kind, text, bbox=None) -> BlockRecord:
    return BlockRecord(page=page, kind=kind, text=text, bbox=bbox)


@pytest.fixture
def two_page_doc():
    """Page 1 carries boxes everywhere; page 2 has none (fallback territory)."""
    blocks = [
        block(1, "header", "A Study of Things", (40.0, 20.0, 500.0, 36.0)),
        block(1, "text", "We claim a four point gain.", (40.0, 50.0, 500.0, 66.0)),
        block(1, "text", "Results hold under matched budgets.", (40.0, 70.0, 500.0, 86.0)),
        block(1, "text", "See the table below.", (40.0, 90.0, 500.0, 106.0)),
        block(2, "header", "2. Method"),
        block(2, "text", "The method uses two passes."),
        block(2, "equation", "x = y + z"),
    ]
    return ingest_block_list(blocks)


@pytest.fixture
def small_ledger():
    gain = LedgerEntry(
        claim_id="c-gain",
        claim_text="Four point gain on the benchmark.",
        evidence=(Anchor(1, 2, 2),),
        risk_text="Gain may not survive matched budgets.",
        status=STATUS_SUSPECTED,
    )
    bare = LedgerEntry(
        claim_id="c-bare",
        claim_text="Training converges in one epoch.",
        evidence=(),
        risk_text="No convergence plot anywhere.",
        status=STATUS_SUSPECTED,
    )
    return [gain, bare]
