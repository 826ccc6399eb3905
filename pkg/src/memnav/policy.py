"""Decision layer: target attribute database, structured prompt assembly,
response parsing, the deterministic scripted policy, and the wire client for
an external decider with guaranteed fallback."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Sequence

import httpx
import numpy as np

from .core import AttributeDatabase, MemnavError, Pose, TaskSpec, tokenize, wrap_angle
from .proposer import AnnotatedCandidates, ExplorationState
from .retrieval import RetrievalResult
from .sim import Observation

WIRE_VERSION = 1

_ACTION_RE = re.compile(r"\{\s*[\"']action[\"']\s*:\s*[\"']?(-?\d+)[\"']?\s*\}")


class DecisionParseError(MemnavError):
    pass


class InvalidCodeError(MemnavError):
    pass


class DeciderUnavailableError(MemnavError):
    pass


# -- target attribute database ------------------------------------------------

def _stub_attribute_table() -> dict[str, dict[str, str]]:
    return json.loads(
        resources.files("memnav.data").joinpath("object_attributes.json").read_text("utf-8")
    )


def stub_attribute_provider(task_text: str) -> dict[str, str] | None:
    """Fixed lookup over ~20 household objects; the first task keyword found in
    the table wins. Returns None for unknown objects."""
    table = _stub_attribute_table()
    for token in tokenize(task_text):
        if token in table:
            return table[token]
    return None


AttributeProvider = Callable[[str], "dict[str, str] | None"]


def build_attribute_database(
    task: TaskSpec, provider: AttributeProvider = stub_attribute_provider
) -> AttributeDatabase:
    """Query the provider for the four attribute strings; a failed or unknown
    lookup yields a degraded (all-empty) database rather than an error."""
    try:
        record = provider(task.raw_text)
    except Exception:
        record = None
    if not record:
        return AttributeDatabase("", "", "", "", frozenset(), degraded=True)
    common_location = record.get("common_location", "")
    return AttributeDatabase(
        general_description=record.get("general_description", ""),
        appearance_features=record.get("appearance_features", ""),
        structure_shape=record.get("structure_shape", ""),
        common_location=common_location,
        location_keywords=frozenset(tokenize(common_location)),
        degraded=False,
    )


# -- prompt assembly ----------------------------------------------------------

PROMPT_HEADER = (
    "TASK: NAVIGATE TO THE NEAREST [TARGET_OBJECT], and get as close to it as possible. \n"
    "Use your prior knowledge about where items are typically located within a home. \n"
    "There are [N] red arrows superimposed onto your observation, which represent potential actions. \n"
    "These are labeled with a number in a white circle, which represent the location you would move "
    "to if you took that action. \n"
    "[TURN_INSTRUCTION]"
)

TURN_INSTRUCTION = "Note: choosing action 0 will turn you around completely (180 degrees)."

COT_SCAFFOLD = """Let's solve this navigation task step by step:

1. Current State Analysis: What do you observe in the environment? What objects and pathways are visible?
   Look carefully for the target object, even if it's partially visible or at a distance.

2. Memory Integration: Review the memory context below for clues about target location.
   - Pay special attention to memories containing or near the target object
   - Use recent memories (fewer steps ago) over older ones
   - Consider action recommendations based on memory

3. Goal Analysis: Based on the target and home layout knowledge, where is the [TARGET_OBJECT] likely to be?

4. Scene Assessment: Quickly evaluate if [TARGET_OBJECT] could reasonably exist in this type of space:
   - If you're in an obviously incompatible room (e.g., looking for a [TARGET_OBJECT] but in a clearly different room type), choose action 0 to TURN AROUND immediately

5. Path Planning: What's the most promising direction to reach the target? Avoid revisiting
   previously explored areas unless necessary. Consider:
   - Available paths and typical room layouts
   - Areas you haven't explored yet

6. Action Decision: Which numbered arrow best serves your plan? Return your choice as {"action": <action_key>}. Note:
   - You CANNOT GO THROUGH CLOSED DOORS, It doesn't make any sense to go near a closed door.
   - You CANNOT GO THROUGH WINDOWS AND MIRRORS
   - You DO NOT NEED TO GO UP OR DOWN STAIRS
   - Please try to avoid actions that will lead you to a dead end to avoid affecting subsequent actions, unless the dead end is very close to the [TARGET_OBJECT]
   - If you see the target object, even partially, choose the action that gets you closest to it"""


@dataclass(frozen=True)
class PromptBundle:
    task_block: str
    candidate_block: str
    memory_block: str
    cot_scaffold: str

    @property
    def text(self) -> str:
        return "\n\n".join(
            block for block in (
                self.task_block, self.candidate_block, self.memory_block, self.cot_scaffold
            ) if block
        )


@dataclass(frozen=True)
class DecisionResponse:
    chosen_code: int
    raw_text: str


def assemble_prompt(
    task: TaskSpec,
    db: AttributeDatabase,
    candidates: AnnotatedCandidates,
    retrieval: RetrievalResult | None,
    turn_active: bool,
) -> PromptBundle:
    """Fill the decision template. Byte-stable for fixed inputs."""
    target = task.raw_text.upper()
    header = (
        PROMPT_HEADER
        .replace("[TARGET_OBJECT]", target)
        .replace("[N]", str(len(candidates)))
        .replace("[TURN_INSTRUCTION]", TURN_INSTRUCTION if turn_active else "")
        .rstrip()
    )
    knowledge_lines = ["TARGET KNOWLEDGE:"]
    if db.degraded:
        knowledge_lines.append("- (no stored knowledge for this target)")
    else:
        knowledge_lines.extend([
            f"- general description: {db.general_description}",
            f"- appearance: {db.appearance_features}",
            f"- structure/shape: {db.structure_shape}",
            f"- common location: {db.common_location}",
        ])
    task_block = header + "\n\n" + "\n".join(knowledge_lines)

    candidate_block = "\n".join(["CANDIDATE ACTIONS:"] + [
        f"- {line}" for line in candidates.render_lines()
    ])

    memory_lines = ["MEMORY CONTEXT:"]
    if retrieval is None or not retrieval.entries:
        memory_lines.append("- (no relevant memories yet)")
    else:
        for entry in retrieval.entries:
            ago = retrieval.query_step - entry.latest_step
            x, y, _ = entry.position
            memory_lines.append(
                "- [score {:.4f}] {} ({} steps ago) at ({:.1f}, {:.1f})".format(
                    entry.score, entry.node_id, ago, x, y
                )
            )
    memory_block = "\n".join(memory_lines)

    scaffold = COT_SCAFFOLD.replace("[TARGET_OBJECT]", target)
    return PromptBundle(task_block, candidate_block, memory_block, scaffold)


def parse_decision(raw: str, valid_codes: Sequence[int]) -> DecisionResponse:
    """Extract the last well-formed {"action": <int>} object in the text and
    validate it against the candidate codes."""
    matches = _ACTION_RE.findall(raw)
    if not matches:
        raise DecisionParseError("no action object found in reply")
    code = int(matches[-1])
    if code not in set(valid_codes):
        raise InvalidCodeError(f"action {code} outside valid codes {sorted(valid_codes)}")
    return DecisionResponse(chosen_code=code, raw_text=raw)


# -- deciders -------------------------------------------------------------------

def target_objects_in_view(observation: Observation, task: TaskSpec):
    return [o for o in observation.objects if o.label in task.keywords]


def _destination(pose: Pose, action) -> np.ndarray:
    heading = pose.yaw + action.theta
    return pose.position[:2] + action.r * np.array([math.cos(heading), math.sin(heading)])


def _depth_toward(observation: Observation, relative_angle: float) -> float:
    """Agent's own range estimate along a relative heading: the nearest FOV
    sample inside the field of view, the nearest full-circle sample outside."""
    fov_half = observation.fov_samples[-1][0]
    if abs(relative_angle) <= fov_half + 1e-9:
        return min(observation.fov_samples, key=lambda s: abs(s[0] - relative_angle))[1]
    heading = wrap_angle(observation.pose.yaw + relative_angle)
    return min(observation.circle_samples, key=lambda s: abs(wrap_angle(s[0] - heading)))[1]


def frontier_value(
    observation: Observation,
    exploration: ExplorationState,
    action,
    lookahead: float = 5.0,
) -> float:
    """Fraction of the lookahead span along the candidate direction that is
    both within sensing depth and not yet seen. Rewards candidates that will
    reveal new area, which pulls the agent through doors and down passages
    instead of orbiting already-seen ground."""
    pose = observation.pose
    depth = _depth_toward(observation, action.theta)
    stop = min(depth, action.r + lookahead)
    if stop <= action.r:
        return 0.0
    heading = pose.yaw + action.theta
    ux, uy = math.cos(heading), math.sin(heading)
    ox, oy = float(pose.position[0]), float(pose.position[1])
    step = exploration.grid.resolution
    unseen = 0
    d = action.r + step * 0.5
    while d <= stop:
        cell = exploration.grid.world_to_cell(ox + d * ux, oy + d * uy)
        if exploration.counts.get(cell, 0) == 0 and exploration._explorable(cell):
            unseen += 1
        d += step
    return unseen * step / lookahead


def scripted_decide(
    candidates: AnnotatedCandidates,
    retrieval: RetrievalResult | None,
    observation: Observation,
    task: TaskSpec,
    exploration: ExplorationState | None,
    neighborhood_radius: int = 5,
) -> int:
    """Deterministic policy: approach a visible target, else follow the best
    target-relevant memory, else take the most exploratory candidate.

    Memory direction only engages when the top retrieval entry actually
    matches a task keyword; spatially-near but task-agnostic memories would
    otherwise pin the agent to already-explored ground.
    """
    pose = observation.pose
    visible_targets = target_objects_in_view(observation, task)

    if visible_targets:
        best = min(visible_targets, key=lambda o: o.surface_range)
        heading_world = pose.yaw + best.bearing
        target_xy = pose.position[:2] + (best.surface_range) * np.array(
            [math.cos(heading_world), math.sin(heading_world)]
        )

        def distance_after(pair):
            _, action = pair
            return float(np.linalg.norm(_destination(pose, action) - target_xy))

        code, _ = min(candidates.entries, key=lambda pair: (distance_after(pair), pair[0]))
        return code

    best_entry = retrieval.best if retrieval is not None else None
    if best_entry is not None and task.keywords & best_entry.keywords:
        direction = np.array(best_entry.position[:2]) - pose.position[:2]
        norm = float(np.linalg.norm(direction))
        if norm > 1e-9:
            direction /= norm

            def alignment(pair):
                _, action = pair
                heading = pose.yaw + action.theta
                cand = np.array([math.cos(heading), math.sin(heading)])
                return best_entry.score * float(np.dot(cand, direction))

            code, _ = max(candidates.entries, key=lambda pair: (alignment(pair), -pair[0]))
            return code

    if exploration is not None:
        values = {
            code: round(frontier_value(observation, exploration, action), 6)
            for code, action in candidates.entries
        }
        if max(values.values()) > 0.0:
            code, _ = max(
                candidates.entries,
                key=lambda pair: (values[pair[0]], -abs(pair[1].theta), -pair[0]),
            )
            return code
        # nothing new within sensing reach: head for the closest unseen ground
        goal = exploration.nearest_unseen(pose.position[:2])
        if goal is not None:
            goal_xy = np.array(goal)

            def goal_gap(pair):
                return float(np.linalg.norm(_destination(pose, pair[1]) - goal_xy))

            code, _ = min(candidates.entries, key=lambda pair: (goal_gap(pair), pair[0]))
            return code
        code, _ = max(candidates.entries, key=lambda pair: (-abs(pair[1].theta), -pair[0]))
        return code
    return candidates.codes()[0]


def random_decide(candidates: AnnotatedCandidates, rng) -> int:
    """Uniform choice over candidate codes; the random-walk baseline."""
    return rng.choice(candidates.codes())


# -- external decider over the wire ------------------------------------------

@dataclass
class ExternalEndpoint:
    url: str
    timeout: float = 5.0
    retries: int = 1


def wire_request(bundle: PromptBundle, candidates: AnnotatedCandidates,
                 retrieval: RetrievalResult | None) -> dict:
    """Versioned request document for the external decider."""
    memory = []
    if retrieval is not None:
        for entry in retrieval.entries:
            memory.append({
                "id": entry.node_id,
                "score": entry.score,
                "steps_ago": retrieval.query_step - entry.latest_step,
            })
    candidate_list = []
    for code, action in candidates.entries:
        candidate_list.append({
            "code": code,
            "bearing_deg": math.degrees(action.theta),
            "range_m": action.r,
        })
    return {
        "version": WIRE_VERSION,
        "task": bundle.task_block,
        "candidates": candidate_list,
        "memory": memory,
        "scaffold": bundle.cot_scaffold,
        "prompt": bundle.text,
    }


def external_decide(
    bundle: PromptBundle,
    candidates: AnnotatedCandidates,
    retrieval: RetrievalResult | None,
    endpoint: ExternalEndpoint,
    client: httpx.Client | None = None,
) -> DecisionResponse:
    """POST the request document and extract the action code from the reply.

    Raises DeciderUnavailableError after exhausting retries; callers fall back
    to the scripted policy so a decision is always produced.
    """
    payload = wire_request(bundle, candidates, retrieval)
    valid = candidates.codes()
    last_error: Exception | None = None
    owns_client = client is None
    http = client or httpx.Client()
    try:
        for _ in range(endpoint.retries + 1):
            try:
                response = http.post(endpoint.url, json=payload, timeout=endpoint.timeout)
                response.raise_for_status()
                text = response.text
                try:
                    document = response.json()
                except ValueError:
                    return parse_decision(text, valid)
                if isinstance(document, dict) and "action" in document:
                    code = int(document["action"])
                    if code not in valid:
                        raise InvalidCodeError(f"action {code} outside valid codes {valid}")
                    return DecisionResponse(chosen_code=code, raw_text=text)
                return parse_decision(text, valid)
            except (httpx.HTTPError, DecisionParseError, InvalidCodeError, ValueError) as exc:
                last_error = exc
        raise DeciderUnavailableError(f"external decider failed: {last_error}")
    finally:
        if owns_client:
            http.close()
