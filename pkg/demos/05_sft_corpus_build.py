"""Build the two-objective SFT corpus: for every item one plan-generation
target (teacher plan text) and one answer-generation target (gold
solution), serialized deterministically. The single-kind modes are the
ablation and the plain CoT baseline corpora.

Run: python demos/05_sft_corpus_build.py
"""

import json
import tempfile
from pathlib import Path

from planeval import load_gsm8k
from planeval.planflow import Plan
from planeval.sftgen import build_sft_corpus, serialize_sft, write_sft_outputs

SAMPLE = Path(__file__).resolve().parent.parent / "data" / "samples" / "math_sample.jsonl"


def main():
    problems = load_gsm8k(SAMPLE)
    plans = {
        p.id: Plan(
            item_id=p.id,
            generator_model="demo-teacher",
            text="To solve this question, first we should read off the starting "
            "count, then we should walk the phases in order and keep a running "
            "total.",
        )
        for p in problems
    }

    for mode in ("all", "plan_only", "answer_only"):
        records = build_sft_corpus(problems, plans, mode=mode)
        kinds = sorted({r.kind for r in records})
        print(f"mode={mode:12s} records={len(records):3d} kinds={kinds}")

    with tempfile.TemporaryDirectory() as tmp:
        corpus_path, meta_path = write_sft_outputs(
            problems, plans, mode="all", out_dir=tmp, teacher_model="demo-teacher"
        )
        first = json.loads(corpus_path.read_text().splitlines()[0])
        print(f"\nfirst serialized record  kind={first['kind']}  source={first['source_id']}")
        print(f"prompt starts: {first['prompt'][:60]!r}")
        meta = json.loads(meta_path.read_text())
        print(f"\nsidecar counts: {meta['counts']}")
        print(f"trainer echo:   rank={meta['training']['lora_rank']}, "
              f"alpha={meta['training']['lora_alpha']}, epochs={meta['training']['epochs']}")


if __name__ == "__main__":
    main()
