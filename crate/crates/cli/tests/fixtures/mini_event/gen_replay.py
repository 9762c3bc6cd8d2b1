"""Writes canned generator responses for the mini-event prompts.

Usage: gen_replay.py <run dir containing audit.jsonl>

Run `run-all` once with an empty replay.jsonl to capture the prompts, then
run this script. Responses are scripted from the documents in each prompt
and deliberately include the formatting slips real models make.
"""
import json
import re
import sys
from pathlib import Path

HERE = Path(__file__).parent
KEYWORDS = {
    "q-firefighters": ("firefighters",),
    "q-roads": ("closed", "closure", "shut"),
    "q-shelters": ("shelter", "evacuation center"),
}


def documents(prompt):
    block = prompt.rsplit("Documents: ", 1)[1].split("\nQuestion: ", 1)[0]
    docs = []
    for line in block.strip("\n").split("\n"):
        label, text = line.split(": ", 1)
        docs.append((int(label[len("Doc-"):]), text))
    return docs


def core(text):
    return re.split(r"(?<=[a-z0-9])\. ", text, maxsplit=1)[0].rstrip(".")


def bullets(query_id, docs, limit=5):
    groups = {}
    for n, text in docs:
        if any(k in text.lower() for k in KEYWORDS[query_id]):
            groups.setdefault(core(text), []).append(n)
    out = []
    for fact, ns in list(groups.items())[:limit]:
        out.append((fact, ns[:3]))
    return out


def cite(ns):
    return "(" + ", ".join(f"Doc-{n}" for n in ns) + ")"


def respond(rec, day):
    qid = rec["query_id"]
    facts = bullets(qid, documents(rec["prompt"]))
    lines = []
    if (day, qid) == ("r2", "q-firefighters"):
        lines = [f"{i}. {f} {cite(ns)}" for i, (f, ns) in enumerate(facts, 1)]
    else:
        lines = [f"* {f} {cite(ns)}" for f, ns in facts]
    if (day, qid) == ("r1", "q-roads"):
        lines.append("* Drivers should expect delays near the fire area")
    if (day, qid) == ("r1", "q-shelters"):
        lines.append("* A second shelter is being prepared (Doc-99)")
    if (day, qid) == ("r2", "q-roads") and len(facts) >= 3:
        joined = "; ".join(f for f, _ in facts[:4])
        lines.insert(0, f"* Multiple closures reported: {joined} {cite(facts[0][1] + facts[1][1])}")
    if (day, qid) == ("r2", "q-shelters"):
        lines.insert(0, "**Facts:**")
        lines.append("")
        lines.append("These facts are based on the provided documents.")
    if (day, qid) == ("r1", "q-firefighters"):
        lines.append("")
        lines.append("Answer: Several hundred firefighters are active on the Ridge Fire.")
    return "\n".join(lines)


def main():
    run_dir = Path(sys.argv[1])
    records = [json.loads(l) for l in open(run_dir / "audit.jsonl") if l.strip()]
    with open(HERE / "replay.jsonl", "w") as f:
        for rec in records:
            day = rec["request_id"].rsplit("-", 1)[1]
            f.write(json.dumps({"promptHash": rec["prompt_hash"], "response": respond(rec, day)}) + "\n")


if __name__ == "__main__":
    main()
