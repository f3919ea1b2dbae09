"""The reward stack, bottom to top: score normalization, the confidence
reward, repetition counting, and full episode rewards for four generation
behaviors.

Run:  python demos/04_reward_stack.py
"""

import numpy as np

from diaquad.gateway import MockProfile, mock_generate
from diaquad.prompting import build_acr_input, build_asu_input
from diaquad.reward import (
    count_repetitions,
    normalize,
    trusted_estimation,
    trusted_reflexion,
    episode_reward,
)
from diaquad.rlsim import default_dialogue

print("== min-max normalization of raw beam scores")
print("  [-3.2, -1.1, -0.4] ->", normalize([-3.2, -1.1, -0.4]))
print("  all tied            ->", normalize([7.0, 7.0, 7.0]), "(no confidence signal)")

print("\n== the confidence reward grows as the score profile gets peakier")
for t in (1 / np.e, 0.25, 0.1, 0.05, 0.01):
    value = trusted_estimation([[0.0, float(t), 1.0]])
    print(f"  middle score {t:.3f} -> reward {value:6.2f}")

print("\n== repetition counting (identical after NFC + trim)")
print("  ['a','b','c'] ->", count_repetitions(["a", "b", "c"]))
print("  ['a','a','a'] ->", count_repetitions(["a", "a", "a"]))

print("\n== the combined reward switches branch when outputs repeat")
print("  p=0:", trusted_reflexion(1.0, 2.0, 0.5, 0.5, p=0).total)
print("  p=2:", trusted_reflexion(1.0, 2.0, 0.5, 0.5, p=2).total)

print("\n== episode rewards for the four mock behaviors")
dialogue = default_dialogue()
asu_prompt = build_asu_input(dialogue)
acr_prompt = build_acr_input(dialogue, "Blue Harbor")
for behavior in ("faithful", "noisy", "repetitive", "gibberish"):
    profile = MockProfile(behavior=behavior, dialogues=(dialogue,), n_outputs=3)
    asu_gen = mock_generate(asu_prompt, profile, seed=42)
    acr_gen = mock_generate(acr_prompt, profile, seed=42)
    b = episode_reward(asu_gen, acr_gen, dialogue)
    print(f"  {behavior:10s} r_rp={b.r_rp:.2f} r_ra={b.r_ra:.2f} p={b.p} "
          f"total={b.total:7.2f}")
