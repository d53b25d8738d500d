"""
Simulate a tumor and reconstruct it
===================================

Draw a three-subclone tumor sampled five times, fit the model and compare the
reconstruction with the truth. A full-length chain takes a few minutes; pass
a smaller iteration count on the command line for a quick look.
"""

import sys

from pairphylo import inference as inf
from pairphylo import model as md
from pairphylo import sampler as sp
from pairphylo.simulate import SimulationSpec, simulate

n_iter = int(sys.argv[1]) if len(sys.argv) > 1 else 2000

spec = SimulationSpec(K=50, C=3, n_samples=5, depth_mean=200, v2=0.3, v3=0.3, seed=1)
truth, counts = simulate(spec)
print("true tree", truth.tree)
print("true weights\n", truth.state.w.round(3))

# the sampler explores trees with 2 to 5 subclones
hyper = md.Hyperparameters(n_iter=n_iter, burn_in=min(3000, 3 * n_iter // 8), seed=1)
out = sp.run(counts, hyper)
report = inf.summarize(out, counts=counts)

for j, prob in report.ranked_trees()[:5]:
    print(f"tree {out.space.trees[j]}  posterior {prob:.3f}")

errors = inf.report_errors(truth, report)
print("C_err, T_err, Z_err, w_err:", errors.as_row())
print("estimated weights\n", report.w.round(3))
