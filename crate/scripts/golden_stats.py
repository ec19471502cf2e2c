"""Recompute dataset statistics independently of the Rust code.

Usage: python3 scripts/golden_stats.py fixtures/dataset/sample.jsonl > fixtures/dataset/golden_stats.json
"""
import json
import sys


def question_words(q):
    words = q.split()
    if words and words[-1] == "?":
        words = words[:-1]
    return len(words)


def main(path):
    with open(path, encoding="utf-8") as f:
        records = [json.loads(line) for line in f if line.strip()]
    nq = len(records)
    hints = [h for r in records for h in r["Hints"]]
    nh = len(hints)
    report = {
        "n_questions": nq,
        "n_hints": nh,
        "avg_question_len": sum(question_words(r["Question"]) for r in records) / nq,
        "avg_hint_len": sum(len(h["Hint"].split()) for h in hints) / nh if nh else 0.0,
        "avg_hints_per_q": nh / nq,
        "avg_entities_per_q": sum(len(r["Q_Popularity"]) for r in records) / nq,
        "avg_entities_per_hint": sum(len(h["Entities"]) for h in hints) / nh if nh else 0.0,
        "avg_sources_per_q": sum(len(set(r["Snippet_Sources"]) | set(r["Hints_Sources"])) for r in records) / nq,
    }
    json.dump(report, sys.stdout, indent=2)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main(sys.argv[1])
