"""Pull ST code out of free-form model responses."""

from __future__ import annotations

import re

_FENCE = re.compile(r"^[ \t]*```[^\n`]*\n(.*?)^[ \t]*```[ \t]*$", re.M | re.S)
_START = re.compile(r"^[ \t]*(PROGRAM|FUNCTION_BLOCK)\b", re.M | re.I)
_POU_KEYWORD = re.compile(r"\b(PROGRAM|FUNCTION_BLOCK)\b", re.I)


def _end_pattern(kind: str) -> re.Pattern:
    return re.compile(rf"^[ \t]*END_{kind}\b[ \t]*;?[ \t]*$", re.M | re.I)


def _pou_regions(text: str) -> list[tuple[int, int]]:
    regions = []
    pos = 0
    while True:
        m = _START.search(text, pos)
        if not m:
            break
        end = _end_pattern(m.group(1).upper()).search(text, m.end())
        if not end:
            break
        regions.append((m.start(), end.end()))
        pos = end.end()
    merged: list[tuple[int, int]] = []
    for start, stop in regions:
        if merged and not text[merged[-1][1]:start].strip():
            merged[-1] = (merged[-1][0], stop)
        else:
            merged.append((start, stop))
    return merged


def extract_st(response: str) -> list[str]:
    """Fenced blocks in order; failing that, the longest run of PROGRAM/FUNCTION_BLOCK units."""
    blocks = [m.group(1) for m in _FENCE.finditer(response)]
    if blocks:
        return blocks
    regions = _pou_regions(response)
    if not regions:
        return []
    start, stop = max(regions, key=lambda r: r[1] - r[0])
    return [response[start:stop].lstrip(" \t") + "\n"]


def first_st_snippet(response: str) -> str | None:
    """The first extracted snippet that declares a POU, else the first snippet at all."""
    snippets = extract_st(response)
    for s in snippets:
        if _POU_KEYWORD.search(s):
            return s
    return snippets[0] if snippets else None
