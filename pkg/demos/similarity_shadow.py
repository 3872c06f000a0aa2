"""Similar inputs stay similar in floats but not under exact arithmetic.

An averaging attention head sees two inputs that differ in one token's
multiplicity.  In the float format the sums saturate and the outputs match;
run on the same weights with exact rationals they drift apart.
"""

from fptransformer import fpcore as fc
from fptransformer import verify as vf

fmt = fc.make_format(2, 4)
info = vf.shadow_contrast(fmt)
for key, value in info.items():
    print(f"{key}: {value}")
