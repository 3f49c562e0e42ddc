# %% [markdown]
# # Per-round costs for a BERT-sized model
#
# Twelve adapted 768 x 768 modules, global rank 16, a rank-1 client and
# two-byte parameters. Sizes are shown in decimal megabytes and in MiB.

# %%
from fedplora import costmeter

p = costmeter.CostProfile(d=768, k=768, L=12, R=16, r_i=1, bytes_per_param=2)
print(f"{'method':<10}{'up MB':>9}{'down MB':>10}{'down MiB':>10}{'agg flops':>12}")
for row in costmeter.cost_table(p, participants=10):
    print(f"{row['method']:<10}{row['uplink_bytes'] / costmeter.MB:>9.4f}"
          f"{row['downlink_bytes'] / costmeter.MB:>10.4f}{row['downlink_bytes'] / costmeter.MIB:>10.4f}"
          f"{row['agg_flops']:>12.3e}")

# %% [markdown]
# Fed-PLoRA pays for sending the whole rank-16 stack down, which is still far
# below shipping a dense update, and it folds locally instead of running an SVD
# on the server.

# %%
extra = costmeter.downlink_bytes("fedplora", p) - costmeter.downlink_bytes("hetlora", p)
saved = costmeter.downlink_bytes("flora", p) - costmeter.downlink_bytes("fedplora", p)
print("extra downlink vs zero-padding:", extra, "bytes")
print("saved vs dense download:", saved, "bytes")
print("client fold flops:", costmeter.fold_flops(p))
