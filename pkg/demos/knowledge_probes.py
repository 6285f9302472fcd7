"""
Scoring knowledge-cutoff probes and HellaSwag choices
=====================================================

A model trained on text up to some year should complete "the president in
1993 was ___" but not questions about years after its cutoff. The probe
scorer tallies pre- and post-cutoff hits; the HellaSwag scorer picks the
ending with the lowest average token loss.
"""

from pathlib import Path

from newsbt.eval_harness import hs_accuracy, score_probe_file

FIX = Path(__file__).resolve().parents[1] / "tests" / "fixtures"

for name in ("presidents_chronobert", "presidents_chronogpt"):
    r = score_probe_file(FIX / f"{name}.jsonl")
    print(f"{name:24s} pre {r.pre.correct}/{r.pre.total}   post {r.post.correct}/{r.post.total}")

# %%
# Decoder models tend to keep talking after the answer; letting an answer
# be followed by extra words changes the event tallies.
for flag in (False, True):
    r = score_probe_file(FIX / "events_chronogpt.jsonl", allow_continuation=flag)
    print(f"continuation allowed={flag}: pre {r.pre.correct}/{r.pre.total}, post {r.post.correct}/{r.post.total}")

# %%
res = hs_accuracy(FIX / "hellaswag_hand.jsonl")
for row in res.rows[:3]:
    print(row)
print(f"accuracy {res.accuracy:.2f} over {res.n} examples")
