# # Planning with a learned table
#
# The point-based solver turns a miss-MDP into alpha vectors.  Policies
# planned with the true table, a learned table and an uninformed prior are
# evaluated on the true environment with common random numbers, then put on
# the scale where the prior policy scores 0 and the optimal one scores 1.

import numpy as np

from missmdp.bench import build, preset, prior_missingness
from missmdp.evaluation import normalize_value, rollout_value
from missmdp.learn import learn
from missmdp.plan import SolveConfig, solve_point_based
from missmdp.simulate import generate_dataset

# The ICU benchmark is used because there the uninformed prior is clearly
# worse than the true table; on the Predator desk preset the two policies score
# within Monte Carlo noise of each other, so normalization would be meaningless.

bench = build(preset("icu-smar", "desk"))
config = SolveConfig(epsilon_target=0.01, max_beliefs=100)


def value(M_plan):
    policy = solve_point_based(bench.model, M_plan, config)
    return rollout_value(bench.model, bench.M, policy, 2000, 7, M_belief=M_plan)


opt = value(bench.M)
prior = value(prior_missingness(bench.model))
print(f"optimal {opt.mean:.3f} +- {opt.ci95:.3f}; prior {prior.mean:.3f} +- {prior.ci95:.3f}")

# ## Learned tables along a size ladder

rng = np.random.default_rng(1)
for size in (10, 100, 1_000, 10_000):
    D = generate_dataset(bench.model, bench.M, size, rng, exact=True)
    r = value(learn(D, "asmar", 0.1).table)
    print(size, "normalized value", round(normalize_value(r.mean, prior.mean, opt.mean), 3))

# The same sweep over 20 seeds, with a report file, is one command:
#
#     missmdp experiment --config sweep.ini --out results/
