"""Prompt template loading and slot filling.

Templates ship as plain data files under ``codemill/prompts`` so operators can
diff or swap them without touching code. Slots look like ``{question}`` and
are filled by literal replacement, so braces that belong to the surrounding
text (JSON skeletons, code) survive untouched.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources


class TemplateError(Exception):
    pass


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    ref = resources.files("codemill") / "prompts" / f"{name}.txt"
    try:
        return ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise TemplateError(f"no prompt template named {name!r}")


def fill(template: str, **slots: str) -> str:
    # Single-pass substitution: filled values are never rescanned, so slot
    # tokens occurring inside problem statements survive literally.
    for slot in slots:
        token = "{" + slot + "}"
        if token not in template:
            raise TemplateError(f"template has no slot {token}")
    pattern = re.compile("|".join(re.escape("{" + slot + "}") for slot in slots))
    return pattern.sub(lambda match: slots[match.group(0)[1:-1]], template)
