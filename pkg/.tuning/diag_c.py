import numpy as np
from dpfed import datagen, engine, models, metrics

data = datagen.synth_generate(datagen.SynthConfig(users=100, records=5000, alpha=5.0, beta=5.0, seed=1))
model = models.LogisticRegression(40, 10, l2=5e-3)

cfg = engine.TrainConfig(engine.Algorithm.DP_SCAFFOLD, rounds=488, local_steps=5,
                         user_ratio=0.05, data_ratio=0.2, eta0=0.3, sigma_g=10.0,
                         clip_mode="median", clip_c=1.0, seed=100)
snaps = {}
def hook(server, controls):
    if server.round in (1, 2, 5, 10, 50, 100, 200, 300, 400, 488):
        snaps[server.round] = (server.clip_c, float(np.linalg.norm(server.x)))
trace = engine.run(cfg, data, model, record_metrics=False, round_hook=hook)
for t, (c, xn) in sorted(snaps.items()):
    print(f"t={t:4d}: clip_C={c:.4f} ||x||={xn:.3f}")
acc = metrics.mean_test_accuracy(data, model, trace.final_params)
print("final acc:", round(acc, 4))
# norm distribution at final params over a batch
X, y = data.user_train(0)
_, norms = model.clipped_grad_sum(trace.final_params, X[:2000], y[:2000], np.inf)
print("final per-example grad norm quantiles:", np.percentile(norms, [10, 50, 90]).round(3))
_, norms0 = model.clipped_grad_sum(np.zeros(model.dim), X[:2000], y[:2000], np.inf)
print("at zero params:", np.percentile(norms0, [10, 50, 90]).round(3))
