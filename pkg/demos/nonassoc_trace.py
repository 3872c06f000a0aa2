"""Show that the order of a three-term float sum changes the result.

The order detector relies on exactly this: the same multiset of summands
lands on different values depending on which pair is added first.
"""

from fptransformer import fpcore as fc
from fptransformer.cli import nonassoc_trace

for p, q in [(2, 4), (3, 4)]:
    for line in nonassoc_trace(fc.make_format(p, q)):
        print(line)
    print()
