# # Learning a missingness table from data
#
# Trajectories from the desk-scale ICU benchmark are passed through the three
# learners.  The worst-case total variation (WTV) to the true table shrinks
# with data for the learner whose assumptions hold, and Okamoto bounds turn the
# raw counts into a certificate.

import numpy as np

from missmdp.bench import build, identifiability_gap, preset
from missmdp.evaluation import wtv
from missmdp.learn import learn
from missmdp.pac import certify, learner_keys, sample_size
from missmdp.simulate import generate_dataset

icu = build(preset("icu-smar", "desk"))
print(icu.model.num_states, "states;", icu.model.num_actions, "actions")

# ## WTV against dataset size

rng = np.random.default_rng(0)
for size in (100, 1_000, 10_000, 100_000):
    D = generate_dataset(icu.model, icu.M, size, rng, exact=True)
    errs = {algo: wtv(learn(D, algo, 0.1), icu.M, icu.model) for algo in ("amcar", "asmar", "aimi")}
    print(size, {k: round(v, 3) for k, v in errs.items()})

# AMCAR assumes nothing depends on the state and stalls; AsMAR conditions on
# the always-observed features and converges.

# ## Certificates
#
# How many samples per conditioning key buy precision 0.1 at confidence 0.95?

print("samples for eps=0.1, delta=0.95:", sample_size(0.1, 0.95))
L = learn(D, "asmar", 0.1)
cert = certify(L.counts, 0.95, keys=learner_keys(icu.model, "asmar", always=L.always))
print("global epsilon on 1e5 observations:", round(cert.global_epsilon, 4))

# ## A floor that data cannot remove
#
# When a feature censors itself, AIMI converges to the wrong table.  The
# population-level gap is computed from the construction itself.

unid = build(preset("icu-mnar-unid", "desk"))
print("identifiability gap:", round(identifiability_gap(unid.model, unid.M, unid.graph), 3))
for size in (10_000, 100_000):
    D = generate_dataset(unid.model, unid.M, size, rng, exact=True)
    print(size, "AIMI WTV", round(wtv(learn(D, "aimi", 0.1), unid.M, unid.model), 3))
