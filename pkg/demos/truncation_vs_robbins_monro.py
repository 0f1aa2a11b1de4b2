# %% [markdown]
# # Why truncate?
#
# The cubic field u(x) = x^3 grows faster than linearly. A plain
# Robbins-Monro iteration started at x0 = 3 with gain 1/n overshoots on the
# first step and then explodes. The truncated recursion notices the overshoot,
# restarts from x0, and widens its admissible ball by one notch.

# %%
import numpy as np

from truncsa import CompactFamily, GainSchedule, make_problem, run_trajectory
from truncsa.problems import NoiseModel

problem = make_problem("cubic", 1, noise=NoiseModel("additive", 0.0))
schedule = GainSchedule(a=1.0, b=0.0, alpha=1.0)
compacts = CompactFamily((0.0,), r0=7.0, growth="geometric", rate=2.0)
x0 = np.array([3.0])

# %%
rm = run_trajectory(problem, "rm", schedule, None, 1000, seed=0, x0=x0, record="full")
print("plain RM:", rm.status, "after", rm.steps_done, "steps")
print("iterates:", rm.trace_x[:, 0])

# %% [markdown]
# Now the truncated version. Every truncation step is listed with the radius
# it was measured against.

# %%
chen = run_trajectory(problem, "chen", schedule, compacts, 10_000, seed=0, x0=x0, record="full")
for s in chen.truncation_steps:
    print(f"step {s:3d}: reset to x0, sigma -> {chen.trace_sigma[s]}, radius {compacts.radius(chen.trace_sigma[s]):g}")
print("status:", chen.status, " final x:", chen.final_state.x, " sigma:", chen.final_sigma)

# %% [markdown]
# Once the gains are small enough, the iterate never leaves the ball again
# and the recursion is plain Robbins-Monro from then on. Convergence for this
# field is slow: the deterministic dynamics dx/dt = -x^3/t only shrink like
# 1/sqrt(2 log n).

# %%
n = chen.trace_steps[1:]
err = np.abs(chen.trace_x[1:, 0])
for k in (10, 100, 1000, 10_000):
    print(f"n={k:6d}  |x_n| = {err[k - 1]:.4f}   1/sqrt(2 log n) = {1 / np.sqrt(2 * np.log(k)):.4f}")
