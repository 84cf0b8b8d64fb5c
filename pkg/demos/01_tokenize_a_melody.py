"""
Tokenizing a melody
===================

Parse a short tune written in ABC, turn it into token ids and back.
"""

from typicality.corpus import parse_abc_tune
from typicality.tokenizer import NoteEvent, decode, describe, encode

tune = parse_abc_tune("""X:1
T:Scale fragment
M:4/4
L:1/8
Q:1/4=120
K:D
D2 E F G2 A B | c/ d/ z A4 |]
""")
print(tune.title, "| key", tune.key, "| unit note", tune.unit)

# Eighth notes at quarter = 120 last 250 ms each
for ev in tune.events[:4]:
    print(ev)

tokens = encode(tune.events)
print(" ".join(describe(t) for t in tokens))

# The key signature is read but not applied, so F stays F natural (65).
# Durations come back within 5 ms per duration token.
back = decode(tokens)
print([e.pitch for e in back] == [e.pitch for e in tune.events])

# Long notes use several duration tokens: 2300 ms is 1000 + 1000 + 300
print(" ".join(describe(t) for t in encode([NoteEvent(62, 0, 2300)])))
