"""Demo 5: the HTTP gateway in front of a scripted model.

Starts the WSGI service on a loopback port, sends three requests with a
plain HTTP client, and prints the structured decisions: one answer, one
refusal, and one refusal with full diagnostics (votes, scores, the
reconstructed query).
"""

import json
import threading
import urllib.request
from wsgiref.simple_server import make_server

from abstain import MethodConfig, QuerySample, ScriptedBackend
from abstain.engine import EngineContext
from abstain.gateway import Gateway, build_app

from common import AMBIGUOUS_PROMPT, REWRITTEN_QUERY, banner, script_inversion

FAITHFUL_PROMPT = "What is 6 times 7?\nA. 41\nB. 42\nC. 43"

backend = ScriptedBackend()
script_inversion(
    backend,
    QuerySample(id="f", prompt=FAITHFUL_PROMPT, answerable=True, references=("B",)),
    trace_text="Step 1: 6*7 = 42.\nFinal answer: B",
    q_star=FAITHFUL_PROMPT,
    q_vec=[1.0, 0.0, 0.0],
    q_star_vec=[1.0, 0.0, 0.0],
    judge_reply="Final answer: YES",
    ground_risk=False,
)
script_inversion(
    backend,
    QuerySample(id="m", prompt=AMBIGUOUS_PROMPT, answerable=False),
    trace_text="Step 1: assume the elder struggles with apps.\nFinal answer: A",
    q_star=REWRITTEN_QUERY,
    q_vec=[1.0, 0.0, 0.0],
    q_star_vec=[0.96, 0.28, 0.0],
    judge_reply="Final answer: NO",
    ground_risk=True,
    ground_score=0.97,
)

gateway = Gateway(
    context=EngineContext(model=backend, embedder=backend, guard=backend, judge=backend),
    method=MethodConfig(method="trace_inversion"),
)
server = make_server("127.0.0.1", 0, build_app(gateway))
port = server.server_address[1]
threading.Thread(target=server.serve_forever, daemon=True).start()
print(f"gateway listening on 127.0.0.1:{port}")


def post(path, body):
    req = urllib.request.Request(
        f"http://127.0.0.1:{port}{path}",
        data=json.dumps(body).encode(),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


def get(path):
    with urllib.request.urlopen(f"http://127.0.0.1:{port}{path}") as resp:
        return json.loads(resp.read())


banner("GET /healthz")
print(json.dumps(get("/healthz"), indent=2))

banner("POST /v1/decide: an answerable question")
print(json.dumps(post("/v1/decide", {"prompt": FAITHFUL_PROMPT}), indent=2))

banner("POST /v1/decide: a question the model silently rewrote")
print(json.dumps(post("/v1/decide", {"prompt": AMBIGUOUS_PROMPT}), indent=2))

banner("Same request with trace_wanted: full diagnostics")
body = post("/v1/decide", {"prompt": AMBIGUOUS_PROMPT, "trace_wanted": True})
print(json.dumps(body, indent=2))

server.shutdown()
print("\nabstention is a structured refusal with HTTP 200, never an error status")
