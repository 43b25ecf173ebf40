"""Python bindings for the domainbench C++ core."""

from __future__ import annotations

import json
import os
from typing import Any, Optional

# Wheels ship the resource lists next to the package.
_PACKAGED_DATA = os.path.join(os.path.dirname(__file__), "data")
if os.path.isdir(_PACKAGED_DATA):
    os.environ.setdefault("DOMAINBENCH_DATA_DIR", _PACKAGED_DATA)

from . import _core  # noqa: E402
from ._core import (  # noqa: F401,E402
    STAGES,
    ConfigInvalid,
    DomainbenchError,
    EmptyCorpus,
    InsufficientTokens,
    LayerCountMismatch,
    PieceTokenizer,
    StaleArtifact,
    attribute_rate,
    build_pairs,
    clean_topk,
    collocation_score,
    correlate,
    extract_terms,
    largest_remainder,
    latex_to_text,
    lower_median,
    median_ci_indices,
    mine_phrases,
    percentage_difference,
    probability_metrics,
    tie_rank,
    tokenize_for_mining,
    two_sample_test,
    vectorize,
)

__all__ = [name for name in dir(_core) if not name.startswith("_")] + ["run_stage", "load_manifest"]


def run_stage(
    config: str | os.PathLike[str],
    stage: str = "run",
    *,
    work_dir: Optional[str | os.PathLike[str]] = None,
    seed: Optional[int] = None,
) -> dict[str, Any]:
    """Run one pipeline stage (or "run" for all) and return the manifest."""
    return json.loads(_core._run_stage(os.fspath(config), stage, None if work_dir is None else os.fspath(work_dir), seed))


def load_manifest(work_dir: str | os.PathLike[str]) -> dict[str, Any]:
    return json.loads(_core._load_manifest(os.fspath(work_dir)))
