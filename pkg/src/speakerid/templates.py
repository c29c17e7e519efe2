"""Verbalize quotations into model inputs and candidate speakers into targets.

A source is laid out as::

    <start> left-context quotation infix [MASK] [aux-infix MASK] right-context <end>

with a single space between non-empty segments.  The start/end markers and
the mask string belong to the backend; this module only asks it how many
tokens a piece of text costs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol, Sequence

import yaml

from .corpus import CharacterEntry, QuotationInstance

NONE_SENTINEL = "none"
DEFAULT_TEMPLATE = "replied_by-speaker+addressee"


class AuxTask(str, Enum):
    NONE = "none"
    ADDRESSEE = "addressee"
    GENDER = "gender"
    FICTION = "fiction"


class TemplateError(ValueError):
    pass


class BudgetError(TemplateError):
    """The fixed part of a source does not fit into the token budget."""


class TokenCounter(Protocol):
    mask_token: str
    num_special_tokens: int

    def num_tokens(self, text: str) -> int: ...


@dataclass(frozen=True)
class WhitespaceCounter:
    """Counts whitespace-separated words; handy for tests and budgeting sketches."""

    mask_token: str = "<mask>"
    num_special_tokens: int = 2

    def num_tokens(self, text: str) -> int:
        return len(text.split())


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    source_infix: str = ""
    use_mask: bool = False
    target_prefix: str = ""
    aux_task: AuxTask = AuxTask.NONE
    aux_source_infix: str = ""
    aux_target_prefix: str = ""

    def __post_init__(self):
        object.__setattr__(self, "aux_task", AuxTask(self.aux_task))
        if self.aux_task is not AuxTask.NONE and not (self.aux_source_infix and self.aux_target_prefix):
            raise TemplateError(f"template {self.name!r}: auxiliary task needs both aux infix and aux prefix")

    @property
    def has_aux(self) -> bool:
        return self.aux_task is not AuxTask.NONE

    @property
    def mask_count(self) -> int:
        return int(self.use_mask) + int(self.has_aux)

    def without_aux(self) -> "PromptTemplate":
        """The same template with no auxiliary task; a ``+<task>`` name suffix is dropped."""
        name = self.name
        if self.has_aux and name.endswith(f"+{self.aux_task.value}"):
            name = name[: -len(self.aux_task.value) - 1]
        return PromptTemplate(name, self.source_infix, self.use_mask, self.target_prefix)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["aux_task"] = self.aux_task.value
        return d


@dataclass(frozen=True)
class RenderedPair:
    source_text: str
    target_text: str | None = None
    spans: dict[str, tuple[int, int]] = field(default_factory=dict, compare=False)


_AUX_DEFAULTS = {
    AuxTask.ADDRESSEE: ("is listened by", "Addressee:"),
    AuxTask.GENDER: ("whose gender is", "Gender:"),
    AuxTask.FICTION: ("comes from", "Fiction:"),
}


def _base_templates() -> list[PromptTemplate]:
    return [
        PromptTemplate("none"),
        PromptTemplate("replied_by-none", "replied by:", True, ""),
        PromptTemplate("replied_by-replied_by", "replied by:", True, "replied by:"),
        PromptTemplate("replied_by-speaker", "replied by:", True, "Speaker:"),
        PromptTemplate("speaker-replied_by", "Speaker:", True, "replied by:"),
        PromptTemplate("speaker-speaker", "Speaker:", True, "Speaker:"),
    ]


def template_catalog() -> list[PromptTemplate]:
    """The six source/target combinations plus auxiliary-task extensions of the best one."""
    base = _base_templates()
    best = base[3]
    aux = [
        PromptTemplate(f"{best.name}+{task.value}", best.source_infix, best.use_mask, best.target_prefix,
                       task, *_AUX_DEFAULTS[task])
        for task in (AuxTask.ADDRESSEE, AuxTask.GENDER, AuxTask.FICTION)
    ]
    return base + aux


def get_template(name: str, extra: Sequence[PromptTemplate] = ()) -> PromptTemplate:
    for t in [*extra, *template_catalog()]:
        if t.name == name:
            return t
    known = ", ".join(t.name for t in [*extra, *template_catalog()])
    raise KeyError(f"unknown template {name!r}; known: {known}")


def default_template() -> PromptTemplate:
    return get_template(DEFAULT_TEMPLATE)


def load_templates(path: str | Path) -> list[PromptTemplate]:
    """Read template definitions from a YAML or JSON file (a list of mappings)."""
    text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    if isinstance(data, dict):
        data = data.get("templates", [data])
    return [PromptTemplate(**d) for d in data]


# -- rendering --------------------------------------------------------------


def _keep_tail(words: list[str], allowance: int, counter: TokenCounter) -> list[str]:
    """Longest suffix of `words` costing at most `allowance` tokens."""
    lo, hi = 0, len(words)
    # smallest start index whose suffix fits
    while lo < hi:
        mid = (lo + hi) // 2
        if counter.num_tokens(" ".join(words[mid:])) <= allowance:
            hi = mid
        else:
            lo = mid + 1
    return words[lo:]


def _keep_head(words: list[str], allowance: int, counter: TokenCounter) -> list[str]:
    lo, hi = 0, len(words)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if counter.num_tokens(" ".join(words[:mid])) <= allowance:
            lo = mid
        else:
            hi = mid - 1
    return words[:lo]


def _core_segments(text: str, template: PromptTemplate, mask: str) -> list[tuple[str, str]]:
    segs = [("quotation", text)]
    if template.source_infix:
        segs.append(("infix", template.source_infix))
    if template.use_mask:
        segs.append(("mask", mask))
    if template.has_aux:
        segs.append(("aux_infix", template.aux_source_infix))
        segs.append(("aux_mask", mask))
    return segs


def render_source(instance: QuotationInstance, template: PromptTemplate, budget: int,
                  counter: TokenCounter) -> RenderedPair:
    """Lay out contexts, quotation and prompt within `budget` backend tokens.

    Contexts lose words from their far ends: the start of the left context and
    the end of the right one.  The room left after the fixed part is split
    evenly, the odd token going left; a side that needs less than its half
    hands the surplus to the other.
    """
    core = _core_segments(instance.text, template, counter.mask_token)
    fixed = counter.num_special_tokens + counter.num_tokens(" ".join(s for _, s in core))
    if fixed > budget:
        raise BudgetError(
            f"quotation {instance.quote_id!r} needs {fixed} tokens with its prompt, budget is {budget}"
        )
    room = budget - fixed
    left_words = instance.left_context.split()
    right_words = instance.right_context.split()
    need_l = counter.num_tokens(" ".join(left_words))
    need_r = counter.num_tokens(" ".join(right_words))
    share_l, share_r = (room + 1) // 2, room // 2
    if need_l < share_l:
        share_r += share_l - need_l
    elif need_r < share_r:
        share_l += share_r - need_r
    left = _keep_tail(left_words, share_l, counter)
    right = _keep_head(right_words, share_r, counter)

    def assemble(left, right):
        segs = [("left_context", " ".join(left))] + core + [("right_context", " ".join(right))]
        parts, spans, pos = [], {}, 0
        for name, seg in segs:
            if not seg:
                continue
            if parts:
                pos += 1
            spans[name] = (pos, pos + len(seg))
            parts.append(seg)
            pos += len(seg)
        return " ".join(parts), spans

    text, spans = assemble(left, right)
    # Subword tokenizers may merge across segment joins; shave until it fits.
    while counter.num_special_tokens + counter.num_tokens(text) > budget and (left or right):
        if len(left) >= len(right):
            left = left[1:]
        else:
            right = right[:-1]
        text, spans = assemble(left, right)
    return RenderedPair(text, None, spans)


def _aux_value(template: PromptTemplate, candidate: CharacterEntry,
               addressees: Sequence[CharacterEntry] | None, novel_title: str | None) -> str:
    if template.aux_task is AuxTask.ADDRESSEE:
        if addressees is None:
            raise TemplateError("addressee template needs the gold addressees to build a training target")
        return ", ".join(a.canonical_name for a in addressees) or NONE_SENTINEL
    if template.aux_task is AuxTask.GENDER:
        return candidate.gender.value
    if novel_title is None:
        raise TemplateError("fiction template needs the novel title to build a training target")
    return novel_title


def render_target(candidate: CharacterEntry, template: PromptTemplate,
                  addressees: Sequence[CharacterEntry] | None = None, *,
                  with_aux: bool = True, novel_title: str | None = None) -> str:
    """`<prefix> <name>`, optionally followed by the auxiliary clause.

    Addressees are joined with ", " in the order given (callers pass roster
    order); an empty list renders as ``none``.  Scoring at inference time uses
    ``with_aux=False``.
    """
    parts = [template.target_prefix, candidate.canonical_name]
    if with_aux and template.has_aux:
        parts += [template.aux_target_prefix, _aux_value(template, candidate, addressees, novel_title)]
    return " ".join(p for p in parts if p)
