"""
Mapping points between domains by swapping decoders
====================================================

Encode a Y point with the Y encoder and decode it with the X decoder.
Compare the error against barycentric projections through the MASH
diffusion operator and the DTA transport plan, on test rows only.
"""

import numpy as np

import twinalign as ta
from twinalign.evaluation import EvalConfig, run_mapping_comparison

wine = ta.load_builtin("wine")
pair = ta.make_split(wine, "random", seed=1)
anchors = ta.sample_anchors(pair, 0.1, seed=1)
part = ta.train_test_partition(pair, anchors, 0.2, seed=1)

emb = ta.align("SPUD", pair, anchors)
sub = emb.subset(part.index_maps["x_train"], part.index_maps["y_train"])
model, _ = ta.train_twin(ta.init_twin(pair.X.shape[1], pair.Y.shape[1], seed=1), part.train, sub, part.anchors)

mapped = ta.cross_map(model, "Y", part.test.Y)
print("decoder swap Y -> X, test MSE:", round(ta.cross_domain_mse(mapped, part.test.X), 4))

# MASH weights restricted to training targets
mash = ta.align("MASH", pair, anchors)
W = mash.cross_yx[np.ix_(part.index_maps["y_test"], part.index_maps["x_train"])]
proj = ta.barycentric_project(W, part.train.X)
print("MASH projection Y -> X, test MSE:", round(ta.cross_domain_mse(proj, part.test.X), 4))

# the same comparison for every regularizer, both directions, through the harness
report = run_mapping_comparison("wine", ["random"], seeds=(1,), cfg=EvalConfig())
for row in report.rows:
    print(f"{row['method']:5s} AE {row['mse_ae']:.3f}  MASH {row['mse_mash']:.3f}  DTA {row['mse_dta']:.3f}")
