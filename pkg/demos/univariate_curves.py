"""Conditional MLE of a single selected mean as a function of y.

Writes ``univariate_curves.csv`` with the two-sided (|y| > 1.96) and
one-sided (y > 1.96) estimators on a grid; ``-inf`` marks one-sided roots
that have run off to minus infinity.
"""

import numpy as np

from postsel import io
from postsel.normal_means import univariate_conditional_mle

C = 1.96
ys = np.linspace(C + 0.01, 6.0, 100)
two = [univariate_conditional_mle(y, C) for y in ys]
one = [univariate_conditional_mle(y, C, "one_sided") for y in ys]
io.write_table("univariate_curves.csv", ["y", "two_sided", "one_sided"], zip(ys, two, one))
for y, a, b in list(zip(ys, two, one))[::11]:
    print(f"y = {y:5.2f}   two-sided {a:8.3f}   one-sided {b:9.3f}")
