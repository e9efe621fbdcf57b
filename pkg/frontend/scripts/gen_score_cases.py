"""Regenerate tests/fixtures/score_cases.json from the backend scorer.

Enumerates every grade combination on the 4-criterion binary-credit rubric and
records the server's score for each, so the client-side preview can be held to
the server's arithmetic exactly.
"""

import itertools
import json
from pathlib import Path

from milo.rubric import AllNA, builtin_fixture, dump_rubric, gate, score_grading_scale

OUT = Path(__file__).parent.parent / "tests" / "fixtures" / "score_cases.json"


def main():
    rubric, threshold = builtin_fixture("vqa_judge_rubric_binary")
    names = [c.name for c in rubric.criteria]
    options = [[c.na_level] + [lv.name for lv in c.levels] for c in rubric.criteria]
    cases = []
    for combo in itertools.product(*options):
        grades = dict(zip(names, combo))
        try:
            score = score_grading_scale(rubric, grades)["score"]
            cases.append(
                {"grades": grades, "score": score, "status": gate(score, threshold).value}
            )
        except AllNA:
            cases.append({"grades": grades, "score": None, "status": "ALL_NA"})
    payload = {
        "rubric": dump_rubric(rubric, threshold),
        "redo_threshold": threshold,
        "cases": cases,
    }
    OUT.write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")
    print(f"wrote {len(cases)} cases to {OUT}")


if __name__ == "__main__":
    main()
