"""Python front end for the sama C++ core.

Arrays go in and out as NumPy arrays. Run configs are plain dicts with the
same sections as the JSON config files; omitted keys keep their defaults.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from . import _core
from ._core import (
    ClientError,
    ConfigError,
    DataError,
    DivergenceError,
    InputError,
    aggregate as _aggregate,
    box_to_mask,
    context_attention,
    enumerate_windows,
    mask_pool,
    meteor,
    parse_judge_score,
    points_to_mask,
    rle_decode,
    rle_encode,
    st_iou,
)

__all__ = [
    "ClientError",
    "ConfigError",
    "DataError",
    "DivergenceError",
    "InputError",
    "aggregate",
    "box_to_mask",
    "cider",
    "context_attention",
    "default_config",
    "enumerate_windows",
    "mask_pool",
    "meteor",
    "parse_judge_score",
    "points_to_mask",
    "rle_decode",
    "rle_encode",
    "run_datagen",
    "run_eval",
    "run_train",
    "selfcheck",
    "st_iou",
    "synthetic_corpus",
    "validate_conversation",
]


def _config_text(config: Optional[dict]) -> str:
    return json.dumps(config or {})


def default_config() -> dict:
    return json.loads(_core.default_config_json())


def aggregate(
    frames: Sequence[np.ndarray],
    question: np.ndarray,
    objects: Optional[np.ndarray] = None,
    config: Optional[dict] = None,
    seed: int = 0,
) -> np.ndarray:
    """One language-space token per frame from freshly initialized weights.

    `config` holds aggregator keys only (e.g. {"visual_dim": 8, "llm_dim": 4}).
    """
    return _aggregate([np.asarray(f, dtype=float) for f in frames], np.asarray(question, dtype=float),
                      None if objects is None else np.asarray(objects, dtype=float), json.dumps(config or {}), seed)


def cider(candidates: Sequence[str], references: Sequence[Sequence[str]], sigma: float = 6.0):
    """Returns (per-sample scores, corpus mean)."""
    per_sample, corpus = _core.cider(list(candidates), [list(r) for r in references], sigma)
    return per_sample, corpus


def validate_conversation(raw: str, object_ids: Iterable[str]):
    """Returns (turns, errors); turns are (role, text), errors (kind, offset, message)."""
    return _core.validate_conversation(raw, list(object_ids))


def synthetic_corpus(n: int, seed: int = 0, frames: int = 8, size: int = 32) -> list:
    return [json.loads(line) for line in _core.synthetic_corpus_lines(n, seed, frames, size)]


def run_datagen(out_dir, config: Optional[dict] = None, synthetic: bool = False) -> dict:
    records, corpus, log = _core.run_datagen(_config_text(config), Path(out_dir), synthetic)
    return {"records": records, "corpus": Path(corpus), "log": log}


def run_train(out_dir, config: Optional[dict] = None) -> dict:
    initial, final, checkpoint, heldout, log = _core.run_train(_config_text(config), Path(out_dir))
    return {
        "initial_smoothed_loss": initial,
        "final_smoothed_loss": final,
        "checkpoint": Path(checkpoint),
        "heldout": Path(heldout) if str(heldout) else None,
        "log": log,
    }


def run_eval(eval_jsonl, out_dir, checkpoint=None, config: Optional[dict] = None) -> dict:
    """Scores stored predictions when `checkpoint` is None."""
    report, with_seg, generations, log = _core.run_eval(
        _config_text(config), Path(checkpoint) if checkpoint else Path(), Path(eval_jsonl), Path(out_dir))
    return {"report": json.loads(report), "with_seg": with_seg, "generations": generations, "log": log}


def selfcheck() -> tuple:
    """Returns (failure count, printed report)."""
    return _core.run_selfcheck()
