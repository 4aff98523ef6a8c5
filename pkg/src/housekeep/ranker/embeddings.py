"""Word-vector files and prompt embedding."""

from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import OutOfVocabulary, ParseError

log = logging.getLogger(__name__)

ORR_QUERY = "{object} in {room}"
ORR_KEY = "{receptacle} of {room}"
OR_QUERY = "{object}"
OR_KEY = "{room}"

_SPLIT = re.compile(r"[\s_]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _SPLIT.split(text.lower()) if t]


def load_embeddings(path: str | Path) -> dict[str, np.ndarray]:
    table: dict[str, np.ndarray] = {}
    dim = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if dim is None:
                dim = len(parts) - 1
                if dim < 1:
                    raise ParseError(f"{path}:{lineno}: no vector components")
            if len(parts) - 1 != dim:
                raise ParseError(f"{path}:{lineno}: expected {dim} components, got {len(parts) - 1}")
            try:
                table[parts[0]] = np.array([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    if dim is None:
        raise ParseError(f"{path}: empty embedding file")
    return table


def save_embeddings(table: Mapping[str, np.ndarray], path: str | Path) -> None:
    with open(path, "w") as fh:
        for token in sorted(table):
            fh.write(token + " " + " ".join(repr(float(v)) for v in table[token]) + "\n")


def embed_prompt(
    table: Mapping[str, np.ndarray],
    template: str,
    slots: Mapping[str, str],
    phrase_mode: bool = False,
) -> np.ndarray:
    """Mean word vector of the filled template.

    Missing tokens are skipped; ``OutOfVocabulary`` is raised only when none of
    them is known. In phrase mode the whole filled prompt is a single key.
    """
    text = template.format(**slots)
    if phrase_mode:
        key = " ".join(tokenize(text))
        if key not in table:
            raise OutOfVocabulary([key])
        return np.asarray(table[key], dtype=float)
    tokens = tokenize(text)
    vecs = [table[t] for t in tokens if t in table]
    missing = [t for t in tokens if t not in table]
    if not vecs:
        raise OutOfVocabulary(missing)
    if missing:
        log.debug("prompt %r: skipping unknown tokens %s", text, missing)
    return np.mean(np.asarray(vecs, dtype=float), axis=0)
