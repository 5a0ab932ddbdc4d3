"""
Counting false negative pairs
=============================

Plain instance discrimination treats every other batch member as a negative,
so with two balanced classes roughly half the negatives share the anchor's
class.  Pairing by stationarity state instead keeps hard negatives to pairs
whose states differ, and down-weights the rest by time distance.

No training is needed: the audit replays batch indices only.
"""

import numpy as np

from statiocl import ContrastConfig, SynthSpec, batch_schedule, fnp_audit, format_fnp_comparison, gen_synthetic
from statiocl import stationarity_states

ds = gen_synthetic(SynthSpec(n_segments=1000, seed=3)).normalize()
states = stationarity_states(ds, 0.01)
train = ds.indices("train")
batches = [train[b] for e in range(5) for b in batch_schedule(train.size, 128, seed=0, epoch=e)]

reports = [fnp_audit(ds.labels, states, ds.recording, ds.position, ContrastConfig(), batches, policy)
           for policy in ("statiocl", "random")]
print(format_fnp_comparison(reports))

# %%
# For random pairing the expected rate has a closed form: with N segments in
# C equal classes, another member shares your class with probability (N/C-1)/(N-1).
n = train.size
print("closed form", round((n / 2 - 1) / (n - 1), 4))

# %%
# When stationarity and class coincide exactly there are no hard false negatives.
perfect = fnp_audit(ds.labels, ds.labels, ds.recording, ds.position, ContrastConfig(), batches)
print("states equal to classes:", perfect.hard_fnp_rate)

# %%
# Batch-to-batch spread of the hard rate.
rates = np.array([b["hard_fnp_rate"] for b in reports[0].per_batch if b["hard_fnp_rate"] is not None])
print(f"per-batch hard rate: mean {rates.mean():.4f}, sd {rates.std():.4f}")
