"""From dialogue to prompt, and from model text back to structures.

Run:  python demos/02_prompts_and_parsing.py
"""

from diaquad.parsing import (
    QuadFragment,
    parse_acr_output,
    parse_asu_output,
    render_asu_output,
)
from diaquad.prompting import build_acr_input, build_asu_input, default_template
from diaquad.rlsim import default_dialogue

dialogue = default_dialogue()

print("== extraction prompt (instruction + newline + rendered dialogue)")
print(build_asu_input(dialogue))

print("\n== chain-labeling prompt for one aspect")
print(build_acr_input(dialogue, "Blue Harbor")[:200], "...")

print("\n== Chinese instruction alternate")
print(build_asu_input(dialogue, default_template("ASU", language="zh"))[:60], "...")

print("\n== canonical answer text for a quadruple")
gold = dialogue.quadruples[0]
print(render_asu_output(gold))

print("\n== parsing tolerates quote variants, reordering and chatter")
messy = ('Sure! The opinion is “fantastic”. The sentiment tendency is positive. '
         'The pronoun of "Blue Harbor" is “The film”. '
         'The opinion refers to the explicit aspect "Blue Harbor". Hope that helps!')
parsed = parse_asu_output(messy)
for fragment in parsed.quadruples:
    print("  fragment:", fragment)
print("  residue:", parsed.residue)

print("\n== several answers in one generation come back in order")
two = render_asu_output(gold) + " " + render_asu_output(
    QuadFragment(explicit="Blue Harbor", implicit=None,
                 opinion="overlong", polarity="NEG"))
print(" ", [f.opinion for f in parse_asu_output(two).quadruples])

print("\n== hallucinated text degrades into residue, never an exception")
print(" ", parse_asu_output("mumble mumble no template here"))

print("\n== chain labels accept loose separators but enforce the length")
print(" ", parse_acr_output("[2, 0, 1, 0]", 4).labels)
print(" ", parse_acr_output("2010", 4).labels)
try:
    parse_acr_output("2, 0, 1", 4)
except Exception as err:
    print("  length mismatch ->", err)
