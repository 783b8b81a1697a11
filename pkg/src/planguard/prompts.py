"""Prompt construction from versioned text templates.

Each agent role has fixed system/user templates shipped as package
assets (``planguard/prompts/*.txt``) and instantiated with
:class:`string.Template` ``${field}`` substitution, so prompts are a
pure function of (role, context).  Every template states the output
format the agent must use: the canonical plan grammar, the constraint
grammar (or the ``NO_SAFETY_CONCERNS`` sentinel), the YES / "NO:
<reason>" verdict, or the judge's JSON schema.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from string import Template
from typing import Mapping

from .backends import SYSTEM, USER, ChatTurn

__all__ = [
    "TEMPLATE_VERSION",
    "NO_SAFETY_CONCERNS",
    "PROMPT_ROLES",
    "PromptError",
    "build_prompt",
    "template_text",
]

TEMPLATE_VERSION = 1

# Literal single-line reply that ends the plan-critique loop.
NO_SAFETY_CONCERNS = "NO_SAFETY_CONCERNS"


class PromptError(ValueError):
    """A prompt could not be built from the given context."""


# role -> ((system template, user template), required context fields)
_ROLE_TEMPLATES: dict[str, tuple[tuple[str, str], tuple[str, ...]]] = {
    "task_planner": (
        ("task_planner_system", "task_planner_user"),
        ("task", "capabilities", "observations"),
    ),
    "task_planner_revision": (
        ("task_planner_system", "task_planner_revision_user"),
        ("task", "capabilities", "observations", "plan", "critique"),
    ),
    "safety_planner": (
        ("safety_planner_system", "safety_planner_user"),
        ("task", "plan", "observations"),
    ),
    "executor": (
        ("executor_system", "executor_user"),
        ("robot", "capabilities", "instruction", "observations"),
    ),
    "judge": (
        ("judge_system", "judge_user"),
        ("catalog", "task", "plan", "trace_summary"),
    ),
}

PROMPT_ROLES = tuple(_ROLE_TEMPLATES)


@lru_cache(maxsize=None)
def template_text(name: str) -> str:
    """Return the raw text of a shipped template asset."""
    ref = resources.files("planguard").joinpath(f"prompts/{name}.txt")
    if not ref.is_file():
        raise PromptError(f"no prompt template named {name!r}")
    return ref.read_text(encoding="utf-8")


def _instantiate(name: str, fields: Mapping[str, str]) -> str:
    try:
        return Template(template_text(name)).substitute(fields).strip("\n")
    except KeyError as e:
        raise PromptError(f"missing context field {e.args[0]!r} for template {name!r}") from e


def build_prompt(role: str, context: Mapping[str, str]) -> list[ChatTurn]:
    """Build the chat prompt for an agent role.

    ``context`` must contain the role's required fields (strings);
    extra fields are ignored.  The revision role also honors an
    optional ``failure`` field carrying execution failure feedback.
    """
    try:
        (system_name, user_name), required = _ROLE_TEMPLATES[role]
    except KeyError:
        raise PromptError(
            f"unknown prompt role {role!r}; expected one of {PROMPT_ROLES}"
        ) from None
    missing = [f for f in required if f not in context]
    if missing:
        raise PromptError(f"missing context fields for role {role!r}: {missing}")

    fields = {k: str(v) for k, v in context.items()}
    if role == "task_planner_revision":
        failure = fields.get("failure", "")
        fields["failure_section"] = (
            f"\nExecution failure feedback:\n{failure}\n" if failure else ""
        )
    return [
        ChatTurn(SYSTEM, _instantiate(system_name, fields)),
        ChatTurn(USER, _instantiate(user_name, fields)),
    ]
