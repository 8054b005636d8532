"""Loader for the versioned prompt template files shipped with the package."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Read prompts/<name>.txt from the package."""
    return (resources.files("salesim") / "prompts" / f"{name}.txt") \
        .read_text(encoding="utf-8")


def render(template: str, **fields: object) -> str:
    """Substitute {key} placeholders. Literal braces elsewhere are left alone
    (several templates contain JSON examples)."""
    out = template
    for key, value in fields.items():
        out = out.replace("{" + key + "}", str(value))
    return out


def render_history(history) -> str:
    """Chat history block: one 'Salesperson:'/'Shopper:' line per turn."""
    labels = {"seller": "Salesperson", "shopper": "Shopper"}
    return "\n".join(f"{labels[role]}: {text}" for role, text in history)
