# # Missingness functions and beliefs
#
# A miss-MDP hides state features behind a missing symbol.  Which features go
# missing is governed by a missingness table: one distribution over indicator
# vectors per state.  This walk-through builds the three kinds of table on a
# two-feature space and shows why MAR tables can be ignored when updating
# beliefs while MNAR tables cannot.

import numpy as np

from missmdp.belief import update, update_ignorable
from missmdp.model import FeatureSpace, MissingnessTable, MissMdp, classify_missingness

A, B = 0, 1
fs = FeatureSpace((2, 2))

# ## Three tables
#
# Indicator vectors list feature 1 first; ``(1, 0)`` means feature 2 is hidden.

mcar = MissingnessTable.from_function(fs, lambda s: {(1, 1): 0.5, (1, 0): 0.5})
smar = MissingnessTable.from_function(
    fs, lambda s: {(1, 1): 1.0} if s[1] == A else {(1, 1): 0.5, (0, 1): 0.5}
)
mnar = MissingnessTable.from_function(
    fs, lambda s: {(1, 1): 0.5, (1, 0): 0.5} if s[1] == A else {(1, 1): 0.1, (1, 0): 0.9}
)

for name, M in [("mcar", mcar), ("smar", smar), ("mnar", mnar)]:
    print(f"{name:5s} -> {classify_missingness(M)}")

# The observation ``(b, _)`` from state ``(b, a)``:

print("P((b,_) | (b,a)) =", mcar.observation_probability((B, None), fs.encode((B, A))))

# ## Beliefs
#
# With identity dynamics the update only reweights the prior by the
# likelihood of the observation.  Start unsure whether the state is ``(a, a)``
# or ``(a, b)`` and observe feature 2 missing.

model = MissMdp(fs, 1, (np.eye(4),), np.zeros((4, 1)), np.full(4, 0.25), 0.9)
b = np.array([0.5, 0.5, 0.0, 0.0])

for name, M in [("mcar", mcar), ("mnar", mnar)]:
    full = update(model, M, b, 0, (A, None))
    shortcut = update_ignorable(model, b, 0, (A, None))
    print(f"{name}: Bayes {np.round(full[:2], 4)}  admittability only {np.round(shortcut[:2], 4)}")

# Under MCAR both rules agree.  Under the self-censoring table the missing
# feature is itself evidence: it is more often hidden when its value is ``b``,
# so the posterior moves to (5/14, 9/14) while the shortcut stays at (1/2, 1/2).
