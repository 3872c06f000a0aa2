"""Print the running sums of 1^+ until they stop changing.

Every partial sum up to 3 * 2^p - 1 terms is distinct; after that the total
is stuck at 2^(p+2).
"""

from fptransformer import fpcore as fc
from fptransformer import verify as vf

for p in (2, 3):
    fmt = fc.make_format(p, 4)
    last = 3 * 2 ** p - 1
    table = [vf.max_distinguish_closed_form(k, fmt) for k in range(last + 1)]
    one_p = fc.succ(fc.one(fmt), fmt)
    stuck = fc.left_sum([one_p] * (last + 5), fmt)
    print(f"p={p}: {', '.join(fc.render(x, fmt) for x in table)}; "
          f"{last + 5} terms -> {fc.render(stuck, fmt)}")
