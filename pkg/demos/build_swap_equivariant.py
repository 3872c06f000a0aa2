"""Build a swap-equivariant target model, run it, and find a 3-cycle it breaks.

The model reproduces a random target exactly on every distinct input over a
four-symbol alphabet, yet it is not equivariant under cycling the first
three tokens.
"""

import time

from fptransformer import fpcore as fc
from fptransformer.constructions import assemble as asm
from fptransformer.constructions.blocks import Alphabet

fmt = fc.make_format(2, 4)
alphabet = Alphabet.scalars([fc.fp(x, fmt) for x in ("1", "1.25", "2", "3")])
n = 3

t0 = time.perf_counter()
target = asm.random_swap_equivariant_target(alphabet, n, 1, 7, fmt)
model = asm.assemble_thm1_model(target, alphabet, n, fmt)
dims = model.meta["dims"]
print(f"built in {time.perf_counter() - t0:.2f}s: d={dims['d']} m={dims['m']} "
      f"r={dims['r']} blocks={dims['blocks']}")

inputs = asm.distinct_inputs(alphabet, n)
outs = asm.run_on_seqs(model, inputs)
hits = sum(o == target[X] for X, o in zip(inputs, outs))
print(f"exact on {hits}/{len(inputs)} distinct inputs")

r = lambda seq: [fc.render(tok[0], fmt) for tok in seq]  # noqa: E731
for X, o in list(zip(inputs, outs))[:4]:
    print(f"  {r(X)} -> {r(o)}")

witness = asm.find_cycle_witness(model, inputs)
print("3-cycle witness:", witness)
