"""Demo 3: the five baseline abstention methods on scripted fixtures.

Two calibration-based methods (probs, ask_cali) score a confidence and
compare it against a fitted threshold; reflect asks the model to judge its
own answer; cooperate consults self-specialized domain experts; compete
re-asks the question under adversarial support for alternative answers.
"""

import math

from abstain import MethodConfig, QuerySample, ScriptedBackend
from abstain.baselines import (
    askcali_decide,
    compete_decide,
    cooperate_decide,
    probs_decide,
    reflect_decide,
)
from abstain.prompts import DEFAULT_PROMPTS

from common import banner, script_reflect

QUESTION = QuerySample(
    id="q1",
    prompt="Which number is even?\nA. 3\nB. 4\nC. 5\nD. 7",
    answerable=True,
    references=("B",),
)


def report(name, decision):
    extras = ", ".join(f"{k}={v:.2f}" for k, v in decision.scores.items())
    flags = f" flags={list(decision.flags)}" if decision.flags else ""
    print(f"{name:>10}: abstain={decision.abstain} ({extras}){flags}")


banner("probs: averaged top-k log-probabilities, exponentiated")
confident = ScriptedBackend()
confident.add_chat([("user", QUESTION.prompt)], "Answer: B",
                   logprobs=[[("B", math.log(0.9))] * 5])
report("confident", probs_decide(confident, QUESTION, MethodConfig(method="probs", threshold=0.5)))

shaky = ScriptedBackend()
shaky.add_chat([("user", QUESTION.prompt)], "Answer: B",
               logprobs=[[("B", math.log(0.12))] * 5])
report("shaky", probs_decide(shaky, QUESTION, MethodConfig(method="probs", threshold=0.5)))

banner("ask_cali: the model states its own probability")
backend = ScriptedBackend()
guess_prompt = DEFAULT_PROMPTS.render("ask_cali", "guess", question=QUESTION.prompt)
backend.add_chat([("user", guess_prompt)], "B")
backend.add_chat(
    [("user", guess_prompt), ("assistant", "B"),
     ("user", DEFAULT_PROMPTS.template("ask_cali", "probability"))],
    "Probability: 0.85",
)
report("stated", askcali_decide(backend, QUESTION, MethodConfig(method="ask_cali", threshold=0.5)))

banner("reflect: self-review with an A(true)/B(false) verdict")
for label, verdict in (("endorses", "Final answer: A"), ("retracts", "Final answer: B"),
                       ("mumbles", "hard to say...")):
    rb = ScriptedBackend()
    script_reflect(rb, QUESTION, "Answer: B", verdict)
    report(label, reflect_decide(rb, QUESTION))

banner("cooperate: domain experts review, a judge rules")


def cooperate_backend(final_verdict):
    cb = ScriptedBackend()
    cb.add_chat([("user", QUESTION.prompt)], "Answer: B")
    feedbacks = []
    for domain in ("factual", "commonsense", "mathematical"):
        kp = DEFAULT_PROMPTS.render("cooperate", "knowledge", question=QUESTION.prompt, domain=domain)
        cb.add_chat([("user", kp)], f"{domain}: 4 is divisible by 2.")
        fp = DEFAULT_PROMPTS.render(
            "cooperate", "feedback",
            knowledge=f"{domain}: 4 is divisible by 2.", question=QUESTION.prompt, answer="Answer: B",
        )
        cb.add_chat([("user", fp)], f"{domain} reviewer agrees.")
        feedbacks.append(f"{domain} reviewer agrees.")
    block = "\n".join(f"Feedback {i}: {f}" for i, f in enumerate(feedbacks, 1))
    vp = DEFAULT_PROMPTS.render(
        "cooperate", "verdict", question=QUESTION.prompt, answer="Answer: B", feedbacks=block
    )
    cb.add_chat([("user", vp)], final_verdict)
    return cb


report("endorsed", cooperate_decide(cooperate_backend("Final answer: A"), QUESTION,
                                    MethodConfig(method="cooperate")))
report("challenged", cooperate_decide(cooperate_backend("Final answer: B"), QUESTION,
                                      MethodConfig(method="cooperate")))

banner("compete: does the answer survive adversarial knowledge?")


def compete_backend(new_answers):
    xb = ScriptedBackend()
    xb.add_chat([("user", QUESTION.prompt)], "Answer: B")
    for alt, new in new_answers.items():
        kp = DEFAULT_PROMPTS.render("compete", "knowledge", question=QUESTION.prompt, alternative=alt)
        xb.add_chat([("user", kp)], f"Some sources insist the answer is {alt}.")
        rp = DEFAULT_PROMPTS.render(
            "compete", "reask",
            knowledge=f"Some sources insist the answer is {alt}.", question=QUESTION.prompt,
        )
        xb.add_chat([("user", rp)], f"New answer: {new}")
    return xb


steadfast = compete_backend({"A": "B", "C": "B", "D": "B"})
report("steadfast", compete_decide(steadfast, QUESTION, MethodConfig(method="compete")))
swayed = compete_backend({"A": "A", "C": "C", "D": "B"})
report("swayed", compete_decide(swayed, QUESTION, MethodConfig(method="compete")))
print("abstains only when a strict majority of re-answers flip")
