"""Thin converters from the nine public benchmarks into the JSONL schema.

Fetching and licensing are the operator's responsibility: each converter
takes already-loaded raw records (dicts) and maps fields; nothing here
touches the network.  The expected raw fields are documented per converter
and kept deliberately minimal.

make_mimic builds small synthetic stand-ins with the same shape (including
the unanswerable mixes for umwp/quail/bbq) for CI and demos.
"""

from __future__ import annotations

import random
from typing import Iterable, Mapping, Sequence

from .core import QuerySample
from .errors import SchemaError
from .evaluation import DATASET_DOMAIN, DatasetFile, UNANSWERABLE_DATASET

_LETTERS = "ABCDEFGHIJ"


def _mc_prompt(question: str, options: Sequence[str], context: str | None = None) -> str:
    lines = []
    if context:
        lines.append(context.strip())
    lines.append(question.strip())
    for letter, option in zip(_LETTERS, options):
        lines.append(f"{letter}. {option}")
    return "\n".join(lines)


def _mc_sample(
    dataset: str,
    idx: int,
    question: str,
    options: Sequence[str],
    answer_index: int | None,
    answerable: bool = True,
    context: str | None = None,
    scenario: str | None = None,
) -> QuerySample:
    if answerable:
        if answer_index is None or not 0 <= answer_index < len(options):
            raise SchemaError(f"{dataset}[{idx}]: answer index {answer_index} out of range")
        references: tuple[str, ...] = (_LETTERS[answer_index],)
    else:
        references = ()
    return QuerySample(
        id=f"{dataset}-{idx}",
        prompt=_mc_prompt(question, options, context),
        answerable=answerable,
        references=references,
        dataset=dataset,
        domain_group=DATASET_DOMAIN.get(dataset, "other"),
        scenario=scenario,
    )


def _answer_index(record: Mapping, options: Sequence[str], key: str = "answer") -> int:
    value = record[key]
    if isinstance(value, bool):
        raise SchemaError(f"{key} must be an index or option letter")
    if isinstance(value, int):
        return value
    value = str(value).strip().upper()
    if value in _LETTERS[: len(options)]:
        return _LETTERS.index(value)
    raise SchemaError(f"cannot interpret answer {value!r}")


def convert_mmlu(records: Iterable[Mapping]) -> list[QuerySample]:
    """Raw fields: question, choices (list of 4), answer (index or letter)."""
    return [
        _mc_sample("mmlu", i, r["question"], r["choices"], _answer_index(r, r["choices"]))
        for i, r in enumerate(records)
    ]


def convert_gsm(records: Iterable[Mapping]) -> list[QuerySample]:
    """Raw fields: question, choices, answer (index or letter). Multiple-choice GSM."""
    return [
        _mc_sample("gsm", i, r["question"], r["choices"], _answer_index(r, r["choices"]))
        for i, r in enumerate(records)
    ]


def convert_umwp(records: Iterable[Mapping]) -> list[QuerySample]:
    """Raw fields: question, answerable, options, answer (when answerable).

    Unanswerable items carry no references and are tagged with their
    scenario when provided (default: underspecified_context).
    """
    samples = []
    for i, r in enumerate(records):
        answerable = bool(r["answerable"])
        samples.append(
            _mc_sample(
                "umwp",
                i,
                r["question"],
                r["options"],
                _answer_index(r, r["options"]) if answerable else None,
                answerable=answerable,
                scenario=r.get("scenario", None if answerable else "underspecified_context"),
            )
        )
    return samples


def convert_kcrosswords(records: Iterable[Mapping]) -> list[QuerySample]:
    """Raw fields: question (constraint text), options, answer."""
    return [
        _mc_sample("kcrosswords", i, r["question"], r["options"], _answer_index(r, r["options"]))
        for i, r in enumerate(records)
    ]


def convert_hellaswag(records: Iterable[Mapping]) -> list[QuerySample]:
    """Raw fields: ctx, endings (list of 4), label (index)."""
    return [
        _mc_sample(
            "hellaswag",
            i,
            "Which ending is the most plausible continuation?",
            r["endings"],
            int(r["label"]),
            context=r["ctx"],
        )
        for i, r in enumerate(records)
    ]


def convert_quail(records: Iterable[Mapping]) -> list[QuerySample]:
    """Raw fields: context, question, answers, correct_answer_id, answerable."""
    samples = []
    for i, r in enumerate(records):
        answerable = bool(r.get("answerable", True))
        samples.append(
            _mc_sample(
                "quail",
                i,
                r["question"],
                r["answers"],
                int(r["correct_answer_id"]) if answerable else None,
                answerable=answerable,
                context=r["context"],
                scenario=None if answerable else "unanswerable",
            )
        )
    return samples


def convert_misconceptions(records: Iterable[Mapping]) -> list[QuerySample]:
    """Raw fields: statement, is_true (bool). Rendered as A. True / B. False."""
    return [
        _mc_sample(
            "misconceptions",
            i,
            f"Is the following statement true?\n{r['statement']}",
            ["True", "False"],
            0 if bool(r["is_true"]) else 1,
        )
        for i, r in enumerate(records)
    ]


def convert_propaganda(records: Iterable[Mapping]) -> list[QuerySample]:
    """Raw fields: text, options (technique names), answer."""
    return [
        _mc_sample(
            "propaganda",
            i,
            "Which persuasion technique does the passage use?",
            r["options"],
            _answer_index(r, r["options"]),
            context=r["text"],
        )
        for i, r in enumerate(records)
    ]


def convert_bbq(records: Iterable[Mapping]) -> list[QuerySample]:
    """Raw fields: context, question, answers, label, ambiguous (bool).

    Ambiguous-context items require abstention; disambiguated ones are
    answerable with the labeled answer.
    """
    samples = []
    for i, r in enumerate(records):
        ambiguous = bool(r.get("ambiguous", False))
        samples.append(
            _mc_sample(
                "bbq",
                i,
                r["question"],
                r["answers"],
                None if ambiguous else int(r["label"]),
                answerable=not ambiguous,
                context=r["context"],
                scenario="underspecified_context" if ambiguous else None,
            )
        )
    return samples


CONVERTERS = {
    "mmlu": convert_mmlu,
    "gsm": convert_gsm,
    "umwp": convert_umwp,
    "kcrosswords": convert_kcrosswords,
    "hellaswag": convert_hellaswag,
    "quail": convert_quail,
    "misconceptions": convert_misconceptions,
    "propaganda": convert_propaganda,
    "bbq": convert_bbq,
}


# -- synthetic mimic sets --------------------------------------------------------------

_TOPICS = (
    "the harbor bridge", "a beekeeper", "the night train", "an old orchard",
    "the observatory", "a chess club", "the river ferry", "a lighthouse keeper",
)


def make_mimic(name: str, n: int = 12, seed: int = 0) -> DatasetFile:
    """Small synthetic dataset with the target benchmark's shape.

    Purely for CI and demos: four-option arithmetic questions whose correct
    letter is seeded; the mixed datasets (umwp, quail, bbq) interleave
    unanswerable items roughly every third sample.
    """
    if name not in DATASET_DOMAIN:
        raise SchemaError(f"unknown dataset name {name!r}")
    rng = random.Random(f"mimic:{name}:{seed}")
    mixed = name == UNANSWERABLE_DATASET.get(DATASET_DOMAIN[name])
    samples = []
    for i in range(n):
        a = rng.randint(2, 9)
        b = rng.randint(2, 9)
        correct = a * b
        options = [str(correct + delta) for delta in (0, 1, -1, 2)]
        rng.shuffle(options)
        answer_index = options.index(str(correct))
        unanswerable = mixed and i % 3 == 1
        topic = _TOPICS[i % len(_TOPICS)]
        if unanswerable:
            question = (
                f"A story about {topic} mentions {a} crates. "
                "How many crates arrive on the second day?"
            )
            sample = _mc_sample(
                name, i, question, options, None,
                answerable=False, scenario="underspecified_context",
            )
        else:
            question = (
                f"A story about {topic} involves {a} boxes with {b} items each. "
                "How many items are there in total?"
            )
            sample = _mc_sample(name, i, question, options, answer_index)
        samples.append(sample)
    return DatasetFile(name=name, domain_group=DATASET_DOMAIN[name], samples=tuple(samples))
