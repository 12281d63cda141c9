"""
Grouping instances and picking the distance cut
===============================================

Once instances have identity embeddings, assignment inside a sequence
is bottom-up agglomeration: repeatedly merge the two closest clusters
until no pair sits under the distance threshold. The threshold itself
can be calibrated from annotated pairs.
"""

import numpy as np

from comicreid.cluster import ClusterConfig, agglomerate, assign_identities
from comicreid.evalkit import calibrate_threshold
from comicreid.projector import IdentityProjector, ProjectorConfig
from comicreid.synth import SynthConfig, generate
from comicreid.model import l2_normalize

# Three tight blobs of points: agglomeration should find exactly three
# clusters at a threshold between blob radius and blob separation.
rng = np.random.default_rng(0)
centers = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]])
points = np.vstack([c + 0.2 * rng.normal(size=(4, 2)) for c in centers])

labels = agglomerate(points, ClusterConfig(distance_threshold=1.5))
print("labels at threshold 1.5:", [int(x) for x in labels])
assert len(set(labels)) == 3

# Raising the threshold past the blob separation merges everything:
# clusterings at lower thresholds are always refinements of higher ones.
coarse = agglomerate(points, ClusterConfig(distance_threshold=10.0))
print("labels at threshold 10: ", [int(x) for x in coarse])
assert len(set(coarse)) == 1

# assign_identities runs the same algorithm on a real sequence, using a
# projector to embed each instance's fused face+body features first.
dataset = generate(SynthConfig(identities=8, seed=3))
projector = IdentityProjector(
    ProjectorConfig(input_dim=dataset.config.feature_dim),
    np.random.default_rng(0))
sequence = dataset.sequences[0]
assignment = assign_identities(sequence, dataset.features, projector,
                               ClusterConfig(distance_threshold=0.82))
print("\nassignments for", sequence.sequence_id)
for uuid, label in sorted(assignment.items()):
    print(f"  {uuid[:8]}... -> cluster {label}")

# Calibration: given distances between annotated same-identity pairs
# and annotated distinct pairs, pick the cut that best separates them.
similar = np.abs(rng.normal(0.4, 0.1, size=200))
dissimilar = np.abs(rng.normal(1.2, 0.2, size=200))
result = calibrate_threshold(similar, dissimilar)
print("\ncalibrated threshold:", round(result.threshold, 3),
      "(method:", result.method + ",",
      "separation:", str(round(result.separation, 3)) + ")")
assert similar.mean() < result.threshold < dissimilar.mean()

# When no cut separates the populations at all, the result is flagged
# as degenerate (and a warning is raised) instead of silently handing
# back a useless threshold.
import warnings

same = np.array([0.5, 1.0, 1.5])
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    tangled = calibrate_threshold(same, same)
print("inseparable populations -> degenerate:", tangled.degenerate)
assert tangled.degenerate
