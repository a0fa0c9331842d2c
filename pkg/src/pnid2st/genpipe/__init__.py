"""Model-driven generation pipeline: detection, generation, repair, batch runs."""

from .client import (
    API_KEY_ENV, ChatClient, ClientConfig, ClientError, LiveClient, Message, MockClient, MockEntry,
    MockMismatch, MockScript,
)
from .elements import ELEMENT_KINDS, QUANTITIES, Element, ElementList, classify_tag, parse_element_lines
from .extract import extract_st, first_st_snippet
from .pipeline import (
    Candidate, Conversation, GenerationError, GenerationReport, PipelineError, Plan, PlanError, RepairFailed,
    TaskReport, accepted_units, detect_elements, draft_plan, generate, repair, run_batch,
)
from .prompts import KINDS, REFINEMENTS, GenerationTask, TaskError, render_prompt
from .transcript import Transcript, fixed_clock, mockscript_from_transcripts, strip_timestamps, utc_clock

__all__ = [
    "API_KEY_ENV", "ChatClient", "ClientConfig", "ClientError", "LiveClient", "Message", "MockClient",
    "MockEntry", "MockMismatch", "MockScript", "ELEMENT_KINDS", "QUANTITIES", "Element", "ElementList",
    "classify_tag", "parse_element_lines", "extract_st", "first_st_snippet", "Candidate", "Conversation",
    "GenerationError", "GenerationReport", "PipelineError", "Plan", "PlanError", "RepairFailed", "TaskReport",
    "accepted_units", "detect_elements", "draft_plan", "generate", "repair", "run_batch", "KINDS",
    "REFINEMENTS", "GenerationTask", "TaskError", "render_prompt", "Transcript", "fixed_clock",
    "mockscript_from_transcripts", "strip_timestamps", "utc_clock",
]
