"""Two-round plan-guided inference against a scripted mock: Round1 asks for
an abstract plan, Round2 solves with the plan embedded in the prompt, and
the guided condition beats the direct baseline on a fixture where the
direct answers are scripted to fail.

Run: python demos/03_two_round_plan_inference.py
"""

import sys
import tempfile
from pathlib import Path

from planeval import Gateway, MockTransport, ModelSpec, load_gsm8k, write_transcript
from planeval.planflow import run_condition_matrix

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from helpers import math_transcript_entries  # noqa: E402  (fixture builders live with the tests)

SAMPLE = Path(__file__).resolve().parent.parent / "data" / "samples" / "math_sample.jsonl"


def main():
    problems = load_gsm8k(SAMPLE)
    wrong = {p.id for p in problems[:3]}
    entries = math_transcript_entries(problems, wrong_direct_ids=wrong)

    with tempfile.TemporaryDirectory() as tmp:
        transcript = write_transcript(Path(tmp) / "transcript.jsonl", entries)
        transport = MockTransport.load(transcript)
        gateway = Gateway(Path(tmp) / "cache", transport=transport)
        solver = ModelSpec(name="demo-solver")

        run = run_condition_matrix(
            gateway, [solver], [], problems, ["direct_cot", "plan_augmented"]
        )
        by_condition = {}
        for record in run.records:
            by_condition.setdefault(record.condition.value, []).append(record.score)
        for condition, scores in sorted(by_condition.items()):
            print(f"{condition:15s} mean={sum(scores) / len(scores):.3f} n={len(scores)}")
        print(f"\ntransport calls: {transport.calls} "
              f"(= items x 1 direct + items x 2 plan rounds)")

        before = transport.calls
        run_condition_matrix(gateway, [solver], [], problems, ["direct_cot", "plan_augmented"])
        print(f"re-run transport calls: {transport.calls - before} (all cache hits)")


if __name__ == "__main__":
    main()
