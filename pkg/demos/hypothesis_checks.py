# %% [markdown]
# # Checking the hypotheses before running
#
# Three things have to hold for the truncated recursion to converge:
# the field must point away from the root (H1), the gains must have a
# divergent sum with square-summable squares (H2), and the noisy observation
# must have a locally bounded second moment (H3). Each has a sampled checker.

# %%
from truncsa import GainSchedule, make_problem
from truncsa.problems import NoiseModel, check_h1, check_h3
from truncsa.rng import RandomStream
from truncsa.schedules import check_h2

for name in ("linear", "cubic", "convex_potential", "repulsive"):
    p = make_problem(name, 2, noise=NoiseModel("state_scaled", 0.5))
    h1 = check_h1(p)
    print(f"{name:17s} H1 {'ok ' if h1.passed else 'BAD'} min <u(x), x - x*> = {h1.min_inner_product:+.3g}")

# %% [markdown]
# The repulsive field u(x) = -(x - x*) is the counterexample: the inner
# product is negative everywhere.
#
# Gain exponents outside (0.5, 1] break H2 in one of two ways.

# %%
for alpha in (0.4, 0.5, 0.6, 1.0, 1.1):
    r = check_h2(GainSchedule.unchecked(1.0, 0.0, alpha))
    print(f"alpha={alpha:<4}  sum diverges={r.divergent_sum!s:5}  squares summable={r.square_summable!s:5}  ok={r.holds}")

# %% [markdown]
# H3 is estimated by Monte Carlo on a few points of the ball. For the cubic
# field with additive noise the exact value is |x|^6 + sigma^2 d, so on the
# ball of radius 2 the maximum should sit near 64.5.

# %%
p = make_problem("cubic", 2, noise=NoiseModel("additive", 0.5))
h3 = check_h3(p, 2.0, 4000, RandomStream(7))
print(f"max E|U|^2 ~ {h3.max_second_moment_estimate:.2f} +- {h3.standard_error:.2f} at {h3.argmax}")
