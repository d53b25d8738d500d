"""
Genotype codes and read-type probabilities
==========================================

A mutation pair carries two loci on each of two alleles. Up to allele order
there are ten genotypes; each one implies a distribution over the eight read
types a short read can show.
"""

import numpy as np

from pairphylo import genotype as gt
from pairphylo import model as md

# the ten canonical codes with their 2x2 representatives (rows are alleles)
for q in range(1, gt.N_CODES + 1):
    print(q, gt.representative(q).tolist(), "mutations:", gt.num_mutations(q))

# read-type probabilities for each code; columns are codes, rows read types
print(gt.READ_LABELS)
print(np.round(gt.EMISSION, 2))

# a sample is a weighted mix of subclones plus a background noise clone
Z = np.array([[1, 2, 2], [1, 1, 3]])  # two pairs, normal + two subclones
w = np.array([[0.02, 0.5, 0.3, 0.18]])  # background, then one weight per subclone
rho = np.array([0.25] * 4 + [0.5] * 4)
p = md.tilde_p_all(Z, w, rho)
print("read-type probabilities for pair 1:", np.round(p[0, 0], 3))
print("complete-read block sums to", p[0, 0, :4].sum())
