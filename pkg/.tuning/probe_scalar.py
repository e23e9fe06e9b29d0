import math
import numpy as np
from dpfed import datagen, engine, models, metrics

def synth_scalar(users, records, alpha, beta, seed, d=40, L=10, flip=0.05):
    rng = np.random.default_rng(seed)
    sig = np.sqrt(np.arange(1, d + 1, dtype=float) ** -1.2)
    n_train = int(0.8 * records)
    tx, ty, sx, sy, gt = [], [], [], [], []
    for _ in range(users):
        u = math.sqrt(alpha) * rng.standard_normal()          # scalar mean for W entries
        W = u + rng.standard_normal((d, L))
        ub = math.sqrt(alpha) * rng.standard_normal()
        b = ub + rng.standard_normal(L)
        B = math.sqrt(beta) * rng.standard_normal()           # scalar mean for v
        v = B + rng.standard_normal(d)
        X = v + sig * rng.standard_normal((records, d))
        labels = np.argmax(X @ W + b, axis=1)
        flips = rng.random(records) < flip
        offs = rng.integers(1, L, size=records)
        labels = np.where(flips, (labels + offs) % L, labels)
        tx.append(X[:n_train]); ty.append(labels[:n_train])
        sx.append(X[n_train:]); sy.append(labels[n_train:])
        gt.append((W, b))
    ds = datagen.FederatedDataset(tx, ty, sx, sy, L, seed, gt)
    return datagen.preprocess(ds)

data = synth_scalar(100, 5000, 5.0, 5.0, seed=1)
model = models.LogisticRegression(40, 10, l2=5e-3)

cfg = engine.TrainConfig(engine.Algorithm.SCAFFOLD, rounds=488, local_steps=5,
                         user_ratio=0.05, data_ratio=0.2, eta0=0.3, seed=100)
trace = engine.run(cfg, data, model, record_metrics=False)
print("(5,5) scalar-mean non-private ceiling:", round(100*metrics.mean_test_accuracy(data, model, trace.final_params), 2))

for sigma, K, T, paper in [(10.0, 5, 488, 45.53), (160.0, 5, 506, 15.99), (10.0, 1, 542, 27.41), (10.0, 40, 72, 21.80)]:
    cfg = engine.TrainConfig(engine.Algorithm.DP_SCAFFOLD, rounds=T, local_steps=K,
                             user_ratio=0.05, data_ratio=0.2, eta0=0.3, sigma_g=sigma,
                             clip_mode="median", clip_c=1.0, seed=100)
    trace = engine.run(cfg, data, model, record_metrics=False)
    acc = metrics.mean_test_accuracy(data, model, trace.final_params)
    print(f"(5,5)scalar sigma={sigma:5.0f} K={K:2d} T={T}: acc={100*acc:.2f} (paper: {paper})")
