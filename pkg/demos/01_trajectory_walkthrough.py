"""Walk one query through the refinement loop and watch the states move.

Each step re-encodes the query with the pooled embeddings of earlier
passes injected as extra input slots; the printout shows how far each new
state drifts from the previous one and when early stopping would kick in.
"""

import numpy as np

from rtembed import RefineConfig, ToyBackend, cosine_similarity, init_params, refine


def main():
    backend = ToyBackend(init_params(seed=42))
    query = "which sorting algorithm is stable and in place"

    print(f"backend: {backend.name()}")
    print(f"query:   {query!r}\n")

    trajectory = refine(backend, query, RefineConfig(steps=6))
    print(f"ran {trajectory.steps_executed} refinement steps "
          f"({len(trajectory.states)} states including the initial pass)")
    for t in range(1, len(trajectory.states)):
        drift = cosine_similarity(trajectory.states[t], trajectory.states[t - 1])
        print(f"  step {t}: cos(h_{t}, h_{t-1}) = {drift:+.6f}")

    print("\nwith early stopping (epsilon = 2e-2, i.e. stop once cos > 0.98):")
    stopped = refine(backend, query, RefineConfig(steps=6, early_stop=True, epsilon=2e-2))
    print(f"  stop reason: {stopped.stop_reason.value} after {stopped.steps_executed} steps")

    baseline = refine(backend, query, RefineConfig(steps=0))
    plain = backend.encode(query, ())
    print(f"\nT=0 equals the plain encoding exactly: "
          f"{np.array_equal(baseline.final.values, plain.values)}")


if __name__ == "__main__":
    main()
