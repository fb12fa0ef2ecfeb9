"""Score sentence pairs the STS way: cosine per pair, Spearman vs gold.

Sentence A plays the query role and gets refined; sentence B is encoded
plain. The closed-form additive backend keeps the numbers easy to reason
about, and a small step sweep shows how the correlation moves with T.
"""

from rtembed import AdditiveBackend, AdditiveRefParams, RefineConfig, eval_sts
from rtembed.experiments import rotation_like_transition

PAIRS = [
    ("a cat sleeps on the warm windowsill", "a kitten naps in the sun", 4.6),
    ("the market opened sharply lower", "stocks fell at the opening bell", 4.2),
    ("he plays the violin beautifully", "she repairs old tractors", 0.4),
    ("rain flooded the northern valley", "heavy rainfall swamped the valley towns", 4.4),
    ("the recipe needs two eggs", "the orchestra tuned before the concert", 0.2),
    ("students gathered for the lecture", "the hall filled with undergraduates", 3.8),
    ("the rover crossed the dune field", "a robot drove over sand hills", 4.0),
    ("she filed the quarterly report", "the report was submitted on time", 3.2),
]


def main():
    # a rotation transition makes refinement actually move the states;
    # with the identity transition the trajectory sits at its fixed point
    backend = AdditiveBackend(
        AdditiveRefParams(dim=32, mix=0.4, seed=9, transition=rotation_like_transition(32))
    )
    print(f"{len(PAIRS)} sentence pairs, backend {backend.name()}\n")
    for steps in (0, 1, 2, 3):
        rho = eval_sts(backend, RefineConfig(steps=steps), PAIRS)
        label = "baseline" if steps == 0 else f"T={steps}"
        print(f"  {label:<9} spearman = {rho:+.4f}")
    print("\nA-side refinement only; pass refine_both=True to refine both sides.")


if __name__ == "__main__":
    main()
