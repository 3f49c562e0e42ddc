# %% [markdown]
# # One-rank pieces and folding
#
# A rank-R adapter is a sum of R outer products. Splitting it into those
# pieces changes nothing about the update, but it lets a client train any
# subset of them and fold the rest into its frozen weight.

# %%
import numpy as np

from fedplora.adapters import (TargetModule, effective_weight, fold, init_lora, lora_delta, lora_to_plora,
                               plora_delta)
from fedplora.numkit import RngStream

g = np.random.default_rng(0)
d, k, R = 6, 5, 4
pair = init_lora(d, k, R, 0.5, RngStream(0))
pair.b[:] = g.standard_normal((d, R))
stack = lora_to_plora(pair)
print("components:", len(stack), "each a", stack.components[0].a.shape, "and b", stack.components[0].b.shape)
print("max |plora - lora| =", np.abs(plora_delta(stack) - lora_delta(pair)).max())

# %% [markdown]
# A client with budget r_i = 1 picks one component. The other three are
# folded into the frozen weight, so the network it starts from is exactly the
# global one.

# %%
w0 = TargetModule(g.standard_normal((d, k)))
picked, rest = [2], [0, 1, 3]
client_frozen = fold(stack, rest, w0)
client = effective_weight(client_frozen, stack.subset(picked))
server = effective_weight(w0, stack)
print("trainable scalars:", stack.subset(picked).n_params(), "== r_i (d + k) =", 1 * (d + k))
print("client vs global weight gap:", np.linalg.norm(client - server))

# %% [markdown]
# Dropping instead of folding loses the unselected pieces for the round:

# %%
dropped = effective_weight(w0, stack.subset(picked))
print("gap when dropping:", np.linalg.norm(dropped - server))
