import numpy as np

from lib.convergence.convergence_lab import (
    assumption_flags,
    incremental_perturbation_study,
    iterate_until,
    l1_preserved,
    sign_stability_check,
)
from lib.convergence.trace_report import render_perturbation_report
from lib.fusion.fusion_core import DeltaModel
from lib.store.tensor_store import flatten

print("Script is running")

DIM = 1000


def random_delta(rng, task_id):
    values = rng.standard_normal(DIM)
    return DeltaModel(vec=flatten([("w", [DIM], values)]), task_id=task_id)


# Fixed-set iteration over 100 seeded random sets
held = converged = stable = preserved = 0
for seed in range(100):
    rng = np.random.default_rng(seed)
    count = int(rng.integers(2, 9))
    deltas = [random_delta(rng, task_id) for task_id in range(count)]
    _, trace = iterate_until(deltas, eps=1e-8, max_steps=200)
    flags = assumption_flags(trace)
    held += flags.held
    converged += trace.converged_step is not None
    stable += sign_stability_check(trace).passed
    preserved += l1_preserved(trace)

print(f"assumption flags held: {held}/100")
print(f"converged within 200 steps: {converged}/100")
print(f"sign stability passed: {stable}/100")
print(f"L1 norms preserved: {preserved}/100")

# Incremental additions, n growing from 2 to 32
rng = np.random.default_rng(2024)
initial = [random_delta(rng, 0), random_delta(rng, 1)]
stream = [random_delta(rng, task_id) for task_id in range(2, 32)]
report = incremental_perturbation_study(initial, stream, steps_per_add=1)
print(render_perturbation_report(report))
