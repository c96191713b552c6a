#!/usr/bin/env python3
"""Writes the demo inputs and the mock fixture that scripts every model call.

Run from anywhere: python3 demo/make_demo.py. Output is deterministic.
"""
import json
import math
from pathlib import Path

HERE = Path(__file__).resolve().parent


def dump_jsonl(name, rows):
    with open(HERE / name, "w") as f:
        for r in rows:
            f.write(json.dumps(r, sort_keys=True) + "\n")


def dump_json(name, obj):
    with open(HERE / name, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def rule(contains, token, prob):
    return {"context_contains": contains, "token": token, "prob": prob}


# ---- corpus: (id, sentences, {after sentence k: (rationale, prob of next word)}, vector)
CORPUS = [
    ("river", ["The river froze early this year.", "Barges stopped running in December.",
               "The mill bought its coal by train instead.", "Coal prices in town went up by spring."],
     {1: ("A frozen river cannot carry barges.", 0.4), 2: ("Trains cost more per ton than barges.", 0.3)},
     [0.9, 0.3, 0.1, 0.0]),
    ("bakery", ["A bakery sells 40 loaves on a normal day.", "On market days it sells twice as many.",
                "The owner now bakes 80 loaves every Saturday."],
     {1: ("Saturday is the market day.", 0.5), 0: ("Bread is made from flour.", 0.0002)},
     [1.0, 0.1, 0.0, 0.2]),
    ("lamp", ["The lamp would not turn on.", "Mira replaced the bulb.", "The room lit up at once."],
     {1: ("So the old bulb had burned out.", 0.6)},
     [0.8, -0.1, 0.2, 0.1]),
    ("recipe", ["Preheat the oven.", "Grease a tin.", "Pour in the batter."], {}, [0.0, 0.1, 1.0, 0.3]),
    ("lyrics", ["La la la.", "Oh oh oh.", "Na na na."], {}, [0.1, 0.0, 0.2, 1.0]),
]

# ---- QA: (id, dataset, question, answer lines, {after line k: (rationale, prob)})
QA = [
    ("g1", "gsm8k", "Tom buys 3 packs of 4 pens. How many pens does he have?",
     ["Each pack has 4 pens.", "3 * 4 = 12", "#### 12"],
     {0: ("Multiply packs by pens per pack.", 0.01), 1: ("He has 12 pens.", 0.02)}),
    ("g2", "gsm8k", "A train travels 60 km each hour for 2 hours. How far does it go?",
     ["Distance is speed times time.", "60 * 2 = 120", "#### 120"],
     {0: ("Use 60 km for each of the 2 hours.", 0.002)}),
    ("g3", "gsm8k", "Ana has 10 apples and eats 4. How many are left?",
     ["She starts with 10 apples.", "10 - 4 = 6", "#### 6"],
     {0: ("Eating removes apples.", 0.02)}),
    ("e1", "ecqa", "Where would you keep milk cold? (A) oven (B) refrigerator (C) shelf",
     ["Milk spoils when warm.", "A refrigerator keeps food cold.", "The final answer is: B"],
     {0: ("Cold storage slows spoiling.", 0.005), 1: ("An oven heats food instead.", 0.0015)}),
    ("e2", "ecqa", "What do you use to cut paper? (A) scissors (B) spoon (C) pillow",
     ["Cutting needs a sharp edge.", "Scissors have sharp blades.", "The final answer is: A"],
     {0: ("A spoon and a pillow are blunt.", 0.004)}),
]
QA_VECTORS = [[1.0, 0.2, 0.0, 0.0], [1.0, -0.2, 0.0, 0.0], [0.9, 0.0, 0.1, 0.0], [1.0, 0.1, 0.0, 0.1], [1.0, 0.0, 0.0, -0.1]]

# ---- tasks for supervise / eval: (id, tag, question, gold, candidates, rationale)
TASKS = [
    ("t1", "gsm8k", "Kim has 5 bags with 3 marbles each. How many marbles?", "15", ["14", "15", "16"],
     "Multiply 5 bags by 3 marbles."),
    ("t2", "gsm8k", "A book costs 8 dollars. How much do 2 books cost?", "16", ["16", "10", "18"],
     "Two books cost twice as much."),
    ("t3", "ecqa", "Where do fish live? (A) desert (B) water (C) sky", "B", ["(A)", "(C)", "(B)"],
     "Fish breathe through gills in water."),
]

# ---- labeled candidates for calibration: (ratio k, helpful). Gain is ln k.
LABELED = [(12, True), (9, True), (7, True), (5, True), (4, True), (3.5, False), (3, True), (2.5, True),
           (2, False), (1.5, False), (1, False), (0.6, False), (0.5, True), (0.3, False)]


def annotate(units, marks, sep):
    out = []
    for i, u in enumerate(units):
        out.append(u)
        if i in marks:
            out.append("<BOT>" + marks[i][0] + "<EOT>")
    return sep.join(out)


def main():
    table = {}
    extractor = []
    rules = []

    corpus = []
    for doc_id, sents, marks, vec in CORPUS:
        text = " ".join(sents)
        corpus.append({"id": doc_id, "text": text, "source": "pile"})
        table[text] = vec
        if marks:
            extractor.append({"prompt_contains": sents[0], "outputs": [annotate(sents, marks, " ")]})
        for k, (r, p) in marks.items():
            rules.append(rule(r, sents[k + 1].split()[0], p))

    qa = []
    for (qid, ds, q, lines, marks), vec in zip(QA, QA_VECTORS):
        answer = "\n".join(lines)
        qa.append({"id": qid, "dataset": ds, "question": q, "answer": answer})
        table[q + "\n" + answer] = vec
        extractor.append({"prompt_contains": q, "outputs": [annotate(lines, marks, "\n")]})
        for k, (r, p) in marks.items():
            rules.append(rule(r, lines[k + 1].split()[0], p))

    rationalyst, agent = [], []
    tasks = []
    for tid, tag, q, gold, cands, r in TASKS:
        tasks.append({"id": tid, "task_tag": tag, "question": q, "gold": gold})
        steps = ["The final answer is: " + c for c in cands]
        rationalyst.append({"prompt_suffix": q + "\n", "outputs": [r]})
        agent.append({"prompt_suffix": q + "\n", "outputs": steps})
        agent.append({"prompt_suffix": r + "\n", "outputs": steps})
        gold_tok = next(c for c in cands if c.strip("()") == gold)
        rules.append(rule(r, gold_tok, 0.9))
        for c in cands:
            if c != gold_tok:
                rules.append(rule(r, c, 0.05))

    labeled = []
    for i, (k, helpful) in enumerate(LABELED):
        r = "Hint number %d." % i
        pre = "Labeled item %d says something. " % i
        fol = "Result%d follows." % i
        labeled.append({"source_id": "lab%d" % i, "doc_id": "lab%d" % i, "position": 1, "preceding": pre,
                        "rationale": r, "following": fol, "origin": "corpus", "source": "pile",
                        "label": "helpful" if helpful else "unhelpful"})
        rules.append(rule(r, "Result%d" % i, k / 1000.0))

    mock = {
        "tokenizer": "word",
        "default_outputs": ["The final answer is: 0"],
        "distribution": {"rules": rules, "vocab_size": 1000},
        "embedding": {"dim": 4, "max_tokens": 4096, "table": table},
        "models": {
            "extractor": {"completions": extractor, "default_outputs": ["no annotations"]},
            "rationalyst": {"completions": rationalyst, "default_outputs": ["Think about the question."]},
            "agent": {"completions": agent},
        },
    }
    config = {
        "backends": {"mock": {"type": "mock", "fixture": "mock.json"}},
        "roles": {r: {"backend": "mock", "model": r} for r in ["extractor", "rationalyst", "agent", "scorer", "embedder"]},
        "prefilter": {"alpha": 0.5, "max_tokens": 2000},
        "filter": {"decay": 0.9, "horizon": 64, "tau_f": 0, "tau_f_by_source": {"gsm8k": 1.2, "ecqa": 0.5}},
        "supervision": {"mode": "implicit", "num_candidates": 3, "temperature": 0.7, "top_k": 3, "max_steps": 20},
        "seed": 7,
        "jobs": 2,
    }

    dump_jsonl("corpus.jsonl", corpus)
    dump_jsonl("qa.jsonl", qa)
    dump_jsonl("tasks.jsonl", tasks)
    dump_jsonl("labeled.jsonl", labeled)
    dump_json("mock.json", mock)
    dump_json("config.json", config)


if __name__ == "__main__":
    main()
