# %% [markdown]
# # Recovering a gridworld reward
#
# An expert that walks to the bottom-right goal of a 4x4 grid is summarized
# by its discounted feature counts. The projection method searches for a
# linear reward under which those counts are matched, and value iteration
# then checks whether the expert is optimal for the recovered reward.

# %%
import numpy as np

from scanirl import envs, irl

spec = envs.EnvSpec(kind="gridworld", height=4, width=4)
mdp = envs.tabular_build(spec)
_, expert = envs.value_iteration(mdp)
arrows = np.array(list("^>v<"))[expert].reshape(4, 4)
print("expert:\n" + "\n".join(" ".join(r) for r in arrows))

# %% one-hot features: one weight per cell
result = irl.irl_recover(mdp, expert, irl.one_hot_features(mdp.n_states))
print(f"{result.iterations} iterations, margins {np.round(result.margins, 4).tolist()}")
print("recovered reward:\n", result.weights.reshape(4, 4).round(3))
print(f"expert optimal in {result.report.match_fraction:.0%} of states")

# %% four hand-made features: goal distance, walls, column, row
compact = irl.irl_recover(mdp, expert, irl.compact_features(spec))
print("compact weights:", compact.weights.round(3), f"match {compact.report.match_fraction:.0%}")

# %% the opposite reward should make the expert look wrong somewhere
flipped = irl.irl_validate(mdp, -result.weights, irl.one_hot_features(16), expert)
print(f"under the negated reward the expert is optimal in {flipped.match_fraction:.0%} of states")
