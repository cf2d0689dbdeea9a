"""Instruction planning: prompt rendering plus pluggable planner clients.

The engine itself never reasons about free text.  ``plan`` renders a
structured prompt (scene inventory, coordinate system, action grammar,
output schema), hands it to a client, and parses the JSON reply through the
normal action parser.  The offline stub matches a handful of
remove/move/resize phrasings so tests and demos run without any model.
"""

from __future__ import annotations

import json
import re
from typing import Protocol

from .actions import AtomicAction, parse_script
from .errors import ParseError, PlannerMalformedReply, PlannerUnreachable
from .model import Environment
from .physics import infer_support

PROMPT_TEMPLATE = """You are an action planning expert for a layered 2D scene editor.

Scene Description:
{scene_desc}

User Instruction: "{instruction}"

=== Image Coordinate System ===

Image Dimensions: {width} x {height} pixels

Reference Points:
- Top-Left: (0, 0)
- Top-Right: ({width}, 0)
- Bottom-Left: (0, {height})
- Bottom-Right: ({width}, {height})
- Image Center: ({cx}, {cy})

Coordinate Rules:
- Origin at top-left
- X increases left to right
- Y increases top to bottom
- All coordinates must satisfy image bounds

=== Available Atomic Actions ===

REMOVE(object_id)
MOVE(object_id, x, y)
KEEP(object_id)
FALL(object_id, delta_y)
RESIZE(object_id, scale)
RETOUCH(object_id, brightness, contrast, color, sharpness)
EDIT(object_id, prompt, edit_type)
INSERT(prompt, x, y, width, height, layer_relation)

Guidelines:
1. Respect gravity and support relations
2. Maintain physical plausibility
3. Execute actions in correct order
4. Strictly adhere to image boundaries

=== Output Format ===

{{
  "action_sequence": [
    {{ "action": "...", "object_id": ..., "reason": "..." }}
  ]
}}

Generate the action sequence.
"""


class PlannerClient(Protocol):
    def complete(self, prompt: str) -> str:
        """Return the planner's raw JSON reply for a rendered prompt."""
        ...


def scene_description(env: Environment) -> str:
    """One line per visible layer: id, name, bbox, depth score, supporters."""
    support = infer_support(env)
    lines = []
    for lid in env.stacking:
        layer = env.layer(lid)
        x, y, w, h = layer.bbox()
        supp = sorted(support.supporters_of(lid))
        if lid in support.ground_supported:
            supp.append("ground")
        lines.append(
            f"- id={layer.id} name=\"{layer.name}\" bbox=({x}, {y}, {w}, {h}) "
            f"depth_score={layer.depth_score} supported_by={supp}"
        )
    return "\n".join(lines) if lines else "(empty scene)"


def render_planner_prompt(env: Environment, instruction: str) -> str:
    width, height = env.canvas
    return PROMPT_TEMPLATE.format(
        scene_desc=scene_description(env),
        instruction=instruction,
        width=width,
        height=height,
        cx=width // 2,
        cy=height // 2,
    )


def plan(instruction: str, env: Environment, client: PlannerClient) -> list[AtomicAction]:
    """Render the prompt, query the client, and parse the reply into actions."""
    prompt = render_planner_prompt(env, instruction)
    try:
        reply = client.complete(prompt)
    except (PlannerUnreachable, PlannerMalformedReply):
        raise
    except Exception as exc:
        raise PlannerUnreachable(f"planner client failed: {exc}") from exc
    try:
        actions = parse_script(reply)
    except ParseError as exc:
        raise PlannerMalformedReply(f"planner reply failed to parse: {exc}") from exc
    if not actions:
        raise PlannerMalformedReply("planner produced an empty action sequence")
    return actions


class StubPlanner:
    """Keyword matcher over the rendered prompt; test/demo use only.

    Understands ``remove <name>``, ``move <name> [to] <x> <y>``, and
    ``resize <name> [by] <factor>`` clauses joined by ``and``/``then``/
    ``,``/``;``.  Names resolve against layer ids and names found in the
    prompt's scene description.
    """

    def complete(self, prompt: str) -> str:
        instruction = self._extract_instruction(prompt)
        known = self._extract_layers(prompt)
        records = []
        for clause in re.split(r"\band\b|\bthen\b|[;,]", instruction, flags=re.I):
            rec = self._match_clause(clause.strip(), known)
            if rec is not None:
                records.append(rec)
        return json.dumps({"action_sequence": records})

    @staticmethod
    def _extract_instruction(prompt: str) -> str:
        m = re.search(r'User Instruction: "(.*?)"', prompt, flags=re.S)
        return m.group(1) if m else prompt

    @staticmethod
    def _extract_layers(prompt: str) -> dict[str, str]:
        """Map lowercase id and name tokens to layer ids."""
        out: dict[str, str] = {}
        for m in re.finditer(r"- id=(\S+) name=\"(.*?)\"", prompt):
            lid, name = m.group(1), m.group(2)
            out[lid.lower()] = lid
            out[name.lower()] = lid
        return out

    @staticmethod
    def _resolve(token: str, known: dict[str, str]) -> str | None:
        return known.get(token.lower())

    def _match_clause(self, clause: str, known: dict[str, str]):
        m = re.match(r"(?:please\s+)?remove\s+(?:the\s+)?([\w-]+)", clause, flags=re.I)
        if m:
            lid = self._resolve(m.group(1), known)
            if lid:
                return {"action": "REMOVE", "object_id": lid}
        m = re.match(
            r"(?:please\s+)?move\s+(?:the\s+)?([\w-]+)\s+(?:to\s+)?"
            r"\(?\s*(-?\d+(?:\.\d+)?)\s*[, ]\s*(-?\d+(?:\.\d+)?)\s*\)?",
            clause, flags=re.I)
        if m:
            lid = self._resolve(m.group(1), known)
            if lid:
                return {"action": "MOVE", "object_id": lid,
                        "x": float(m.group(2)), "y": float(m.group(3))}
        m = re.match(
            r"(?:please\s+)?resize\s+(?:the\s+)?([\w-]+)\s+(?:by\s+|to\s+)?"
            r"(\d+(?:\.\d+)?)x?",
            clause, flags=re.I)
        if m:
            lid = self._resolve(m.group(1), known)
            if lid:
                return {"action": "RESIZE", "object_id": lid, "scale": float(m.group(2))}
        return None


class HttpPlannerClient:
    """POSTs ``{"prompt": ...}`` to an endpoint and expects ``{"text": ...}``."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def complete(self, prompt: str) -> str:
        import httpx

        try:
            resp = httpx.post(self.endpoint, json={"prompt": prompt},
                              timeout=self.timeout)
            resp.raise_for_status()
            doc = resp.json()
        except Exception as exc:
            raise PlannerUnreachable(
                f"planner endpoint {self.endpoint} failed: {exc}") from exc
        if not isinstance(doc, dict) or not isinstance(doc.get("text"), str):
            raise PlannerMalformedReply(
                "planner endpoint must return {\"text\": \"...\"}")
        return doc["text"]
