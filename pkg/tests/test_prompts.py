"""Prompt templates: content contracts, determinism, and failure modes."""

from __future__ import annotations

import pytest

from planguard.backends import SYSTEM, USER
from planguard.prompts import (
    NO_SAFETY_CONCERNS,
    PROMPT_ROLES,
    PromptError,
    build_prompt,
    template_text,
)

PLANNER_CTX = {
    "task": "Move the can from table A into the box.",
    "capabilities": "Robot 1: move, pick, place, release, move_object, wait, check",
    "observations": "table_a at (0.0, 1.2); can on table_a; user_1 nearby",
}


def test_task_planner_system_lists_capabilities_verbatim():
    turns = build_prompt("task_planner", PLANNER_CTX)
    assert [t.role for t in turns] == [SYSTEM, USER]
    assert PLANNER_CTX["capabilities"] in turns[0].content
    assert PLANNER_CTX["task"] in turns[1].content
    assert PLANNER_CTX["observations"] in turns[1].content


def test_task_planner_system_states_the_plan_grammar():
    system = build_prompt("task_planner", PLANNER_CTX)[0].content
    for form in (
        "Move <robot> to <place>",
        "<robot> pick the <object>",
        "<robot> place <object> in <place>",
        "<robot> release <object>",
        "<robot> move <object> to <place>",
        "<robot> wait for <condition>",
        "<robot> check <condition>",
    ):
        assert form in system
    assert "at safe position" in system and "holding" in system
    assert "when" in system


def test_revision_prompt_embeds_plan_critique_and_failure():
    ctx = dict(PLANNER_CTX, plan="Move Robot 1 to table A",
               critique="Robot 1 must not collide with table A")
    user = build_prompt("task_planner_revision", ctx)[1].content
    assert ctx["plan"] in user and ctx["critique"] in user
    assert "failure" not in user.lower()

    with_failure = dict(ctx, failure="step 2: subgoal timeout")
    user2 = build_prompt("task_planner_revision", with_failure)[1].content
    assert "step 2: subgoal timeout" in user2
    assert "Execution failure feedback" in user2


def test_safety_planner_prompt_contract():
    ctx = {"task": "tidy", "plan": "Move Robot 1 to table A\nRobot 1 pick the can",
           "observations": "user_1 at (-2.0, 3.0)"}
    system, user = (t.content for t in build_prompt("safety_planner", ctx))
    # The three hazard families the reviewer is asked to critique.
    for phrase in ("spatial conflicts", "invalid action dependencies", "omitted preconditions"):
        assert phrase in system
    # The four directive forms and the termination sentinel.
    for form in ("must not collide with", "must stay away from",
                 "must slow down near", "must stay inside"):
        assert form in system
    assert NO_SAFETY_CONCERNS in system
    assert system.count(NO_SAFETY_CONCERNS) == 1
    # Full current plan text appears in the user turn.
    assert ctx["plan"] in user


def test_executor_prompt_contract():
    ctx = {"robot": "Robot 2", "capabilities": "move, pick",
           "instruction": "Robot 2 pick the box",
           "observations": "box at (2.0, 1.1), 0.4 m away"}
    system, user = (t.content for t in build_prompt("executor", ctx))
    assert "Robot 2" in system and "move, pick" in system
    assert '"YES"' in system and '"NO: <reason>"' in system
    assert ctx["instruction"] in user and ctx["observations"] in user


def test_judge_prompt_embeds_catalog_and_schema():
    ctx = {"catalog": "1. first criterion\n2. second criterion",
           "task": "tidy", "plan": "Move Robot 1 to table A",
           "trace_summary": "completed, 0 events of note"}
    system, user = (t.content for t in build_prompt("judge", ctx))
    assert ctx["catalog"] in system
    # JSON schema braces survive templating verbatim.
    assert '{"criteria": [{"id":' in system
    assert '"verdict"' in system and '"evidence"' in system
    assert ctx["trace_summary"] in user


def test_identical_context_gives_identical_prompts():
    a = build_prompt("task_planner", PLANNER_CTX)
    b = build_prompt("task_planner", dict(PLANNER_CTX))
    assert a == b


def test_missing_context_field_is_named():
    ctx = dict(PLANNER_CTX)
    del ctx["observations"]
    with pytest.raises(PromptError, match="observations"):
        build_prompt("task_planner", ctx)


def test_unknown_role_is_rejected():
    with pytest.raises(PromptError, match="narrator"):
        build_prompt("narrator", PLANNER_CTX)
    with pytest.raises(PromptError):
        template_text("no_such_template")


def test_all_roles_build_with_full_context():
    full = dict(PLANNER_CTX, plan="Move Robot 1 to table A", critique="none",
                robot="Robot 1", instruction="Move Robot 1 to table A",
                catalog="1. x", trace_summary="ok", failure="")
    for role in PROMPT_ROLES:
        turns = build_prompt(role, full)
        assert len(turns) == 2 and all(t.content for t in turns)


def test_sentinel_is_the_whole_final_line():
    lines = template_text("safety_planner_system").strip().splitlines()
    assert lines[-1] == NO_SAFETY_CONCERNS
