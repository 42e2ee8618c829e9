# %% [markdown]
# # How far does the generated memory reach?
#
# Repeats the closed-loop experiment for corridor lengths 1 to 8 and records
# generated-scan success with its standard error. The expectation is that
# longer corridors are no easier; the curve is recorded rather than asserted.
#
# Run: `python notebooks/02_corridor_sweep.py [out.csv]` (tens of minutes).

# %%
import csv
import sys

from scanirl import EnvSpec, collect_dataset
from scanirl.generator import GeneratorHyper, train_generator
from scanirl.policy import PolicyHyper, policy_train
from scanirl.runtime import eval_suite

out = sys.argv[1] if len(sys.argv) > 1 else "corridor_sweep.csv"
rows = []
for length in range(1, 9):
    spec = EnvSpec(corridor_length=length)
    data = collect_dataset(spec, episodes=64, seed=1)
    policy, _ = policy_train(data, PolicyHyper())
    generator, _ = train_generator(data, GeneratorHyper())
    gen_row, zero_row = eval_suite(generator, policy, spec, 1000, seed=123, modes=("generated", "zeroed"))
    rows.append((length, gen_row.success_rate, gen_row.standard_error, zero_row.success_rate))
    print(f"L={length}: generated {gen_row.success_rate:.3f} +/- {gen_row.standard_error:.3f}, "
          f"zeroed {zero_row.success_rate:.3f}", flush=True)

with open(out, "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["corridor_length", "generated_success", "standard_error", "zeroed_success"])
    w.writerows(rows)

# %% non-increasing within two standard errors?
worst = max(rows[i + 1][1] - rows[i][1] - 2 * max(rows[i][2], rows[i + 1][2]) for i in range(len(rows) - 1))
print("monotone within 2 SE" if worst <= 0 else f"rises by {worst:.3f} beyond 2 SE somewhere")
