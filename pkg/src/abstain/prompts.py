"""Versioned prompt catalog.

Every model-facing instruction lives here, keyed by (method, stage), so
deployments can swap wording without touching pipeline code.  Substitution
is literal placeholder replacement (not str.format): template text may
legitimately contain braces that must survive verbatim, e.g. the
"{most likely guess}" format illustration shown to the model.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import SchemaError

CATALOG_VERSION = 1

# Instruction appended to elicit a structured reasoning trace.
COT_INSTRUCTION = (
    "Provide step-by-step reasoning, with 'Step 1:', 'Step 2:', etc. "
    "followed by 'Final answer:'."
)

DEFAULT_CATALOG: dict[tuple[str, str], str] = {
    ("common", "cot_instruction"): COT_INSTRUCTION,
    ("trace_inversion", "reconstruct"): (
        "You are a puzzle solver. Given the following reasoning trace, "
        "reconstruct the initial question by interpreting the steps in the "
        "reasoning trace. Do not answer the question.\n"
        "Reasoning Trace:\n"
        "{trace}\n"
        "\n"
        "Reconstructed query:"
    ),
    ("trace_inversion", "judge"): (
        "Do the following two prompts convey the same framing, intent, and "
        "context?\n"
        "\n"
        "Prompt 1: {q1}\n"
        "Prompt 2: {q2}\n"
        "\n"
        "Select YES or NO:\n"
        "Final answer:"
    ),
    ("ask_cali", "guess"): (
        "Provide your best guess for the following question. Give only the "
        "guess.\n"
        "Example: {most likely guess}.\n"
        "Question: {question}."
    ),
    ("ask_cali", "probability"): (
        "Provide the probability your guess is correct.\n"
        "Probability:"
    ),
    ("reflect", "verdict"): (
        "Question: {question}. Answer: {answer}.\n"
        "Is the above answer correct? A. True B. False.\n"
        "Final answer:"
    ),
    ("cooperate", "knowledge"): (
        "Question: {question}.\n"
        "Generate domain-specific knowledge about the question with a focus "
        "on the {domain} domain.\n"
        "Knowledge:"
    ),
    ("cooperate", "feedback"): (
        "Knowledge: {knowledge}\n"
        "Question: {question}.\n"
        "Answer: {answer}.\n"
        "Review the proposed answer and provide feedback on correctness."
    ),
    ("cooperate", "verdict"): (
        "Question: {question}.\n"
        "Answer: {answer}.\n"
        "{feedbacks}\n"
        "Based on feedback, is the proposed answer correct? A. True B. False.\n"
        "Final answer:"
    ),
    ("compete", "knowledge"): (
        "Question: {question}.\n"
        "Alternative answer: {alternative}.\n"
        "Generate supporting knowledge for the alternative answer.\n"
        "Knowledge:"
    ),
    ("compete", "reask"): (
        "Knowledge: {knowledge}\n"
        "Question: {question}.\n"
        "Answer the question using this knowledge.\n"
        "New answer:"
    ),
}

_SUBSTITUTABLE = (
    "trace", "q1", "q2", "question", "answer", "domain",
    "knowledge", "feedbacks", "alternative",
)


class PromptCatalog:
    """Immutable (method, stage) -> template lookup with literal substitution."""

    def __init__(self, entries: dict[tuple[str, str], str] | None = None, version: int = CATALOG_VERSION):
        self.version = version
        self._entries = dict(DEFAULT_CATALOG)
        if entries:
            self._entries.update(entries)

    def template(self, method: str, stage: str) -> str:
        try:
            return self._entries[(method, stage)]
        except KeyError:
            raise SchemaError(f"no prompt registered for ({method!r}, {stage!r})") from None

    def render(self, method: str, stage: str, **values: str) -> str:
        text = self.template(method, stage)
        for key, value in values.items():
            if key not in _SUBSTITUTABLE:
                raise SchemaError(f"unknown prompt placeholder {key!r}")
            text = text.replace("{" + key + "}", value)
        return text

    @classmethod
    def from_file(cls, path: str | Path) -> "PromptCatalog":
        """Load overrides from a JSON file: {"version": n, "prompts": {"method/stage": text}}."""
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot load prompt catalog {path}: {exc}") from exc
        entries: dict[tuple[str, str], str] = {}
        for key, text in doc.get("prompts", {}).items():
            method, sep, stage = key.partition("/")
            if not sep or not isinstance(text, str):
                raise SchemaError(f"bad prompt catalog entry {key!r}")
            entries[(method, stage)] = text
        return cls(entries, version=int(doc.get("version", CATALOG_VERSION)))


DEFAULT_PROMPTS = PromptCatalog()
