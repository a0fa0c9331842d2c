"""Detected P&ID elements and the tag-letter post-filter.

The model's classification is never taken at face value. Instrument tags
follow the usual letter code: the first letter names the measured quantity
and the succeeding letters name the functions, so a tag is a controller only
when one of its function letters is ``C`` and it does not end in the valve
letter ``V``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

ELEMENT_KINDS = ("controller", "indicator", "transmitter", "valve", "vessel", "pump", "switch")
QUANTITIES = ("flow", "level", "pressure", "temperature", "other")

_QUANTITY_LETTER = {"F": "flow", "L": "level", "P": "pressure", "T": "temperature"}
_FUNCTION_LETTERS = set("ACEGHILQRSTVYZ")
_TAG_PREFIX = re.compile(r"\s*([A-Za-z]+)")
_LINE = re.compile(r"^\s*(?:[-*•]|\d+[.)])?\s*([^|]+?)\s*\|\s*([A-Za-z_ ]+?)\s*\|\s*([A-Za-z_ ]+?)\s*$")


@dataclass(frozen=True)
class Element:
    tag: str
    kind: str
    quantity: str = "other"

    def to_dict(self) -> dict:
        return {"tag": self.tag, "kind": self.kind, "quantity": self.quantity}


@dataclass
class ElementList:
    elements: list[Element] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def tags(self) -> list[str]:
        return [e.tag for e in self.elements]

    def of_kind(self, *kinds: str) -> "ElementList":
        return ElementList([e for e in self.elements if e.kind in kinds], list(self.warnings))

    def counts(self, attr: str = "quantity") -> dict[str, int]:
        out: dict[str, int] = {}
        for e in self.elements:
            key = getattr(e, attr)
            out[key] = out.get(key, 0) + 1
        return dict(sorted(out.items()))

    def to_dict(self) -> dict:
        return {"elements": [e.to_dict() for e in self.elements], "warnings": list(self.warnings)}


def instrument_letters(tag: str) -> Optional[str]:
    """Letter code of an instrument tag (``'TICSA'`` for ``'TICSA 4750.03'``), else None."""
    m = _TAG_PREFIX.match(tag)
    if not m:
        return None
    letters = m.group(1).upper()
    if len(letters) < 2 or not set(letters[1:]) <= _FUNCTION_LETTERS:
        return None
    return letters


def classify_tag(tag: str) -> Optional[tuple[str, str]]:
    """(kind, quantity) implied by an instrument tag, or None for non-instrument tags."""
    letters = instrument_letters(tag)
    if letters is None:
        return None
    quantity = _QUANTITY_LETTER.get(letters[0], "other")
    functions = letters[1:]
    if functions.endswith("V"):  # FCV, TCV: the final element is the valve
        kind = "valve"
    elif "C" in functions:
        kind = "controller"
    elif "V" in functions:
        kind = "valve"
    elif "T" in functions:
        kind = "transmitter"
    elif letters[0] == "H" or "S" in functions:
        kind = "switch"
    else:
        kind = "indicator"
    return kind, quantity


def _normalize(word: str, allowed: Iterable[str]) -> Optional[str]:
    w = word.strip().lower()
    if w not in allowed and w.endswith("s"):
        w = w[:-1]
    return w if w in allowed else None


def parse_element_lines(text: str) -> ElementList:
    """Parse ``- TAG | kind | quantity`` lines, then apply the tag-letter post-filter."""
    out = ElementList()
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.strip().startswith("```"):
            continue
        m = _LINE.match(line)
        kind = quantity = None
        if m:
            kind = _normalize(m.group(2), ELEMENT_KINDS)
            quantity = _normalize(m.group(3), QUANTITIES)
        if not m or kind is None or quantity is None:
            out.warnings.append(f"line {lineno}: cannot parse element: {line.strip()!r}")
            continue
        tag = " ".join(m.group(1).split())
        key = tag.upper()
        if key in seen:
            out.warnings.append(f"line {lineno}: duplicate tag {tag!r} ignored")
            continue
        seen.add(key)
        implied = classify_tag(tag)
        if implied is not None:
            new_kind, new_quantity = implied
            if new_kind != kind:
                out.warnings.append(f"{tag}: reported as {kind}, reclassified as {new_kind} by its letter code")
            kind, quantity = new_kind, new_quantity
        out.elements.append(Element(tag, kind, quantity))
    if not out.elements:
        out.warnings.append("no elements detected")
    return out
