"""Per-triple update cost across parameter scales.

The update touches one user, two items, and the segment blocks on the two
items' paths, so a step costs O(K' x F + K) regardless of catalog size.
Doubling F should roughly double the step time; sweeping K at small K
should barely register.
"""

from hierbpr import per_triple_cost_probe

print("feature-dimension scaling at K=10, K'=10:")
rows = per_triple_cost_probe(
    [{"n_latent": 10, "n_visual": 10, "feature_dim": f}
     for f in (512, 1024, 2048, 4096)],
    n_steps=800)
base = rows[0]["seconds_per_step"]
for row in rows:
    us = row["seconds_per_step"] * 1e6
    print(f"  F={row['feature_dim']:5d}: {us:8.1f} us/step "
          f"({row['seconds_per_step'] / base:4.1f}x)")

print("\nlatent-dimension sweep at K'=10, F=512:")
rows = per_triple_cost_probe(
    [{"n_latent": k, "n_visual": 10, "feature_dim": 512}
     for k in (2, 10, 20)],
    n_steps=800)
for row in rows:
    us = row["seconds_per_step"] * 1e6
    print(f"  K={row['n_latent']:3d}: {us:8.1f} us/step")

print("\nno visual dimensions (matrix factorization only), F irrelevant:")
rows = per_triple_cost_probe(
    [{"n_latent": 20, "n_visual": 0, "feature_dim": 4096}],
    n_steps=800)
print(f"  K=20, K'=0: {rows[0]['seconds_per_step'] * 1e6:8.1f} us/step")
