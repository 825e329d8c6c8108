"""Agent abstraction: tools, core, execution traces and transcripts.

The transcript is the byte string iteratively fed to the core. To avoid
escaping ambiguity it is built from length-prefixed frames rather than
textual separators: each frame is a 1-byte role tag, a 4-byte big-endian
payload length, and the payload. Frame roles:

    0x01  initial input
    0x02  core output        (one per step)
    0x03  tool id            (one triple per tool call, in emitted order)
    0x04  tool input
    0x05  tool result

This framing makes transcript reconstruction injective on traces.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence
from urllib.parse import urlparse

from .errors import ValidationError, VetError

ROLE_INPUT = 0x01
ROLE_CORE = 0x02
ROLE_TOOL_ID = 0x03
ROLE_TOOL_INPUT = 0x04
ROLE_TOOL_RESULT = 0x05

# Core function protocol: transcript bytes -> (output, [(tool_id, input), ...])
CoreFunction = Callable[[bytes], tuple[str, Sequence[tuple[str, str]]]]
ToolFunction = Callable[[str], str]


class UnknownToolError(VetError):
    def __init__(self, tool_id: str):
        self.tool_id = tool_id
        super().__init__(f"core emitted unknown tool id {tool_id!r}")


def _require_url(value: str, what: str) -> None:
    parsed = urlparse(value)
    if not parsed.scheme or not parsed.netloc:
        raise ValidationError(f"{what} is not a URL with scheme and host: {value!r}")


@dataclass(frozen=True)
class ToolDescriptor:
    id: str
    endpoint: str
    description: str = ""

    def __post_init__(self):
        _require_url(self.endpoint, f"tool {self.id!r} endpoint")


@dataclass(frozen=True)
class CoreDescriptor:
    model: str
    endpoint: str

    def __post_init__(self):
        _require_url(self.endpoint, "core endpoint")


@dataclass(frozen=True)
class ToolCall:
    tool_id: str
    input: str
    result: str


@dataclass(frozen=True)
class StepRecord:
    step_index: int
    core_output: str
    tool_calls: tuple[ToolCall, ...]

    def __post_init__(self):
        if self.step_index < 0:
            raise ValidationError("step_index must be non-negative")


@dataclass(frozen=True)
class ExecutionTrace:
    initial_input: str
    steps: tuple[StepRecord, ...]
    truncated: bool = False

    def __post_init__(self):
        if not self.steps:
            raise ValidationError("trace must contain at least one step")
        for j, step in enumerate(self.steps):
            if step.step_index != j:
                raise ValidationError(
                    f"step indices must be contiguous from 0, got {step.step_index} at {j}"
                )

    def to_obj(self) -> dict:
        """Canonical-JSON-ready representation (all scalars as strings)."""
        return {
            "initial_input": self.initial_input,
            "truncated": self.truncated,
            "steps": [
                {
                    "step_index": str(s.step_index),
                    "core_output": s.core_output,
                    "tool_calls": [
                        {"tool": c.tool_id, "input": c.input, "result": c.result}
                        for c in s.tool_calls
                    ],
                }
                for s in self.steps
            ],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "ExecutionTrace":
        steps = tuple(
            StepRecord(
                step_index=int(s["step_index"]),
                core_output=s["core_output"],
                tool_calls=tuple(
                    ToolCall(c["tool"], c["input"], c["result"])
                    for c in s["tool_calls"]
                ),
            )
            for s in obj["steps"]
        )
        return cls(
            initial_input=obj["initial_input"],
            steps=steps,
            truncated=bool(obj.get("truncated", False)),
        )


def frame(role: int, payload: bytes) -> bytes:
    return struct.pack(">BI", role, len(payload)) + payload


def _step_frames(step: StepRecord) -> Iterable[bytes]:
    yield frame(ROLE_CORE, step.core_output.encode("utf-8"))
    for call in step.tool_calls:
        yield frame(ROLE_TOOL_ID, call.tool_id.encode("utf-8"))
        yield frame(ROLE_TOOL_INPUT, call.input.encode("utf-8"))
        yield frame(ROLE_TOOL_RESULT, call.result.encode("utf-8"))


def _transcript_bytes(initial_input: str, steps: Sequence[StepRecord]) -> bytes:
    parts = [frame(ROLE_INPUT, initial_input.encode("utf-8"))]
    for step in steps:
        parts.extend(_step_frames(step))
    return b"".join(parts)


def rebuild_transcript(trace: ExecutionTrace, upto_step: int) -> bytes:
    """Transcript fed to the core at step ``upto_step``.

    Contains the initial input followed by all completed steps strictly
    before ``upto_step``. rebuild_transcript(t, j) is a byte prefix of
    rebuild_transcript(t, j + 1).
    """
    if not 0 <= upto_step < len(trace.steps):
        raise IndexError(f"upto_step {upto_step} out of range for {len(trace.steps)} steps")
    return _transcript_bytes(trace.initial_input, trace.steps[:upto_step])


def full_transcript(trace: ExecutionTrace) -> bytes:
    """Transcript including every step of the trace."""
    return _transcript_bytes(trace.initial_input, trace.steps)


def run_agent(
    core: CoreFunction,
    tools: Mapping[str, ToolFunction],
    input: str,
    max_steps: int,
) -> ExecutionTrace:
    """Execute the iterative agent loop with a black-box core.

    Each step feeds the core the transcript of everything so far; the
    core's emitted tool calls are executed in order and their results
    recorded. The loop halts when the core emits no calls, or when
    max_steps is reached (then the trace is flagged truncated if the
    last step still had pending calls).
    """
    if max_steps < 1:
        raise ValidationError("max_steps must be >= 1")
    steps: list[StepRecord] = []
    truncated = False
    for j in range(max_steps):
        transcript = _transcript_bytes(input, steps)
        output, calls = core(transcript)
        executed = []
        for tool_id, x in calls:
            if tool_id not in tools:
                raise UnknownToolError(tool_id)
            executed.append(ToolCall(tool_id, x, tools[tool_id](x)))
        steps.append(StepRecord(j, output, tuple(executed)))
        if not executed:
            break
    else:
        if steps and steps[-1].tool_calls:
            truncated = True
    return ExecutionTrace(initial_input=input, steps=tuple(steps), truncated=truncated)
