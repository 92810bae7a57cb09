"""Rule-based extraction of a final answer token from heterogeneous model output.

Five heuristics fire in fixed priority order; explicit markers beat stray
letters.  Output is always a member of the option set or the sentinel "Z".
The same machinery parses YES/NO judge verdicts and A/B self-review verdicts
by swapping the option set.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .core import UNPARSED


@dataclass(frozen=True)
class ParseRule:
    name: str
    pattern: str  # human-readable description of what the rule matches
    priority: int  # lower fires first


RULES: tuple[ParseRule, ...] = (
    ParseRule("final_answer_marker", '"Final answer: X"', 1),
    ParseRule("answer_marker", '"Answer: X"', 2),
    ParseRule("correct_answer_is", '"The correct answer is X"', 3),
    ParseRule("bare_option_line", "a line holding only an option token (punctuation ok)", 4),
    ParseRule("final_line_option", "last standalone option token in the final line", 5),
)

assert len({r.priority for r in RULES}) == len(RULES), "rule priorities must be unique"

# Opening decoration a model may wrap the token in: quotes, stars, brackets.
_DECOR = r"(?:[\*\"'\(\[\{]\s*)*"


def _canonical_options(option_set: Sequence[str]) -> list[str]:
    seen: list[str] = []
    for opt in option_set:
        token = opt.strip().upper()
        if token and token != UNPARSED and token not in seen:
            seen.append(token)
    return seen


def _alternation(options: list[str]) -> str:
    # Longest-first so "NO" cannot shadow a hypothetical "N".
    return "|".join(re.escape(o) for o in sorted(options, key=len, reverse=True))


def _token_group(options: list[str]) -> str:
    # Guarded on both sides so "A" never matches inside "Answer".
    return rf"(?<![A-Za-z0-9])({_alternation(options)})(?![A-Za-z0-9])"


def _last_match(pattern: str, text: str) -> str | None:
    found = None
    for m in re.finditer(pattern, text, flags=re.IGNORECASE):
        found = m.group(1)
    return found


def parse_answer(raw: str, option_set: Sequence[str]) -> str:
    """Extract the final answer token from ``raw``; return "Z" if nothing matches.

    Rules fire in priority order; within a rule the last occurrence in the
    text wins (models that restate commit to the final statement).  Matching
    is case-insensitive; the returned token is upper-case.
    """
    options = _canonical_options(option_set)
    if not raw or not options:
        return UNPARSED
    tok = _token_group(options)

    # 1..3: explicit markers, strongest evidence first.
    for marker in (
        rf"final\s+answer\s*(?:is)?\s*:?\s*{_DECOR}{tok}",
        rf"\banswer\s*:\s*{_DECOR}{tok}",
        rf"correct\s+answer\s+is\s*:?\s*{_DECOR}{tok}",
    ):
        found = _last_match(marker, raw)
        if found is not None:
            return found.upper()

    # 4: a line that is nothing but an option token plus punctuation.
    bare = rf"^\W*({_alternation(options)})\W*$"
    found = None
    for line in raw.splitlines():
        m = re.fullmatch(bare, line.strip(), flags=re.IGNORECASE)
        if m:
            found = m.group(1)
    if found is not None:
        return found.upper()

    # 5: last standalone token in the final nonempty line.
    lines = [ln for ln in raw.splitlines() if ln.strip()]
    if lines:
        found = _last_match(tok, lines[-1])
        if found is not None:
            return found.upper()

    return UNPARSED


_OPTION_LINE = re.compile(r"^\s*\(?([A-Y])[\.\):]\s+\S", re.MULTILINE)


def detect_options(prompt: str) -> list[str]:
    """Scan a prompt for lettered option lines ("A. ...", "(B) ...", "C: ...").

    Returns the letters in order of first appearance, or [] when fewer than
    two are found ("Z" is reserved for the unparseable sentinel and is never
    treated as an option).
    """
    letters: list[str] = []
    for m in _OPTION_LINE.finditer(prompt):
        letter = m.group(1).upper()
        if letter not in letters:
            letters.append(letter)
    return letters if len(letters) >= 2 else []
