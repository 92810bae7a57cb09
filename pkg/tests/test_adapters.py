from __future__ import annotations

import pytest

from abstain.adapters import (
    convert_bbq,
    convert_gsm,
    convert_hellaswag,
    convert_kcrosswords,
    convert_misconceptions,
    convert_mmlu,
    convert_propaganda,
    convert_quail,
    convert_umwp,
    make_mimic,
)
from abstain.errors import SchemaError
from abstain.parsing import detect_options


def test_mmlu_converter():
    samples = convert_mmlu(
        [{"question": "Capital of France?", "choices": ["Lyon", "Paris", "Nice", "Metz"], "answer": 1}]
    )
    sample = samples[0]
    assert sample.dataset == "mmlu"
    assert sample.domain_group == "math_knowledge"
    assert sample.answerable and sample.references == ("B",)
    assert detect_options(sample.prompt) == ["A", "B", "C", "D"]


def test_gsm_converter_accepts_letter_answers():
    samples = convert_gsm([{"question": "2+2?", "choices": ["3", "4"], "answer": "b"}])
    assert samples[0].references == ("B",)


def test_umwp_converter_mixes_unanswerable():
    samples = convert_umwp(
        [
            {"question": "3 crates of 4?", "options": ["12", "7"], "answer": 0, "answerable": True},
            {"question": "How many on day two?", "options": ["12", "7"], "answerable": False},
        ]
    )
    assert samples[0].answerable and samples[0].references == ("A",)
    assert not samples[1].answerable and samples[1].references == ()
    assert samples[1].scenario == "underspecified_context"


def test_kcrosswords_converter():
    samples = convert_kcrosswords(
        [{"question": "Entity X constrained by Y?", "options": ["p", "q", "r"], "answer": 2}]
    )
    assert samples[0].dataset == "kcrosswords"
    assert samples[0].references == ("C",)


def test_hellaswag_converter_builds_context():
    samples = convert_hellaswag(
        [{"ctx": "She lifts the kayak.", "endings": ["e0", "e1", "e2", "e3"], "label": 3}]
    )
    assert samples[0].prompt.startswith("She lifts the kayak.")
    assert samples[0].references == ("D",)


def test_quail_converter_unanswerable():
    samples = convert_quail(
        [
            {"context": "ctx", "question": "q?", "answers": ["x", "y"],
             "correct_answer_id": 1, "answerable": True},
            {"context": "ctx", "question": "q2?", "answers": ["x", "y"],
             "correct_answer_id": 0, "answerable": False},
        ]
    )
    assert samples[0].references == ("B",)
    assert samples[1].scenario == "unanswerable"


def test_misconceptions_converter_true_false():
    samples = convert_misconceptions([{"statement": "Lightning never strikes twice.", "is_true": False}])
    assert samples[0].references == ("B",)
    assert "A. True" in samples[0].prompt


def test_propaganda_converter():
    samples = convert_propaganda(
        [{"text": "article text", "options": ["loaded language", "whataboutism"], "answer": 0}]
    )
    assert samples[0].dataset == "propaganda"
    assert samples[0].domain_group == "biases_safety"


def test_bbq_converter_ambiguous_context_requires_abstention():
    samples = convert_bbq(
        [
            {"context": "Two people waited.", "question": "Who was impatient?",
             "answers": ["first", "second", "cannot tell"], "label": 2, "ambiguous": True},
            {"context": "The first person yelled at the clerk.", "question": "Who was impatient?",
             "answers": ["first", "second", "cannot tell"], "label": 0, "ambiguous": False},
        ]
    )
    assert not samples[0].answerable and samples[0].scenario == "underspecified_context"
    assert samples[1].answerable and samples[1].references == ("A",)


def test_converter_rejects_bad_answer_index():
    with pytest.raises(SchemaError):
        convert_mmlu([{"question": "q", "choices": ["a", "b"], "answer": 9}])


def test_mimic_is_deterministic_and_capped():
    first = make_mimic("gsm", n=8, seed=3)
    second = make_mimic("gsm", n=8, seed=3)
    assert first == second
    assert len(first.samples) == 8
    assert all(s.dataset == "gsm" for s in first.samples)


def test_mimic_mixed_datasets_contain_unanswerable():
    for name in ("umwp", "quail", "bbq"):
        dataset = make_mimic(name, n=9, seed=0)
        flags = [s.answerable for s in dataset.samples]
        assert not all(flags) and any(flags)
    for name in ("mmlu", "gsm", "hellaswag"):
        dataset = make_mimic(name, n=9, seed=0)
        assert all(s.answerable for s in dataset.samples)


def test_mimic_unknown_name_rejected():
    with pytest.raises(SchemaError):
        make_mimic("trivia_night")
