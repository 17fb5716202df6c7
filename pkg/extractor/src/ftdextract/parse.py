"""Mapping generated answer text to a class index.

First case-insensitive whole-word match wins: the class (or synonym) whose
occurrence starts earliest in the text is the answer; on a tie the longer
surface form wins. No match at all records the abstain sentinel (-1),
which downstream scoring always counts as wrong.
"""

from __future__ import annotations

import re

from .formats import ABSTAIN


class AnswerParser:
    def __init__(self, class_names: list[str] | tuple[str, ...], synonyms: dict | None = None):
        if len(class_names) < 2:
            raise ValueError("need at least 2 class names")
        self.class_names = list(class_names)
        self._patterns: list[tuple[re.Pattern, int, int]] = []
        for idx, name in enumerate(self.class_names):
            surfaces = [name] + list((synonyms or {}).get(name, []))
            for surface in surfaces:
                pat = re.compile(rf"(?<!\w){re.escape(surface)}(?!\w)", re.IGNORECASE)
                self._patterns.append((pat, idx, len(surface)))

    def parse(self, text: str) -> int:
        """Class index of the earliest matching surface form, or -1."""
        best: tuple[int, int, int] | None = None  # (start, -length, class index)
        for pat, idx, length in self._patterns:
            m = pat.search(text)
            if m is None:
                continue
            key = (m.start(), -length, idx)
            if best is None or key < best:
                best = key
        return best[2] if best is not None else ABSTAIN
