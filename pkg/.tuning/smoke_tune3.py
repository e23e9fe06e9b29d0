import numpy as np
from dpfed import datagen, engine, metrics, models

features, labels = datagen.load_idx("dg_i.idx", "dg_l.idx")
raw = datagen.partition_by_similarity(features, labels, 10, 0.0, seed=5)
data = datagen.preprocess(raw)
pool_X, _ = data.train_pool()
P, mean, _ = models.pca_fit(pool_X, 60)
model = models.OneHiddenLayerNet(64, 10, hidden=200, pca_projection=P, pca_mean=mean, l2=5e-3)

for l, s, K, eta0, sigma in [(1.0, 0.5, 10, 1.0, 10.0), (1.0, 1.0, 10, 1.0, 10.0), (1.0, 1.0, 10, 0.5, 5.0)]:
    out = {}
    for algo in (engine.Algorithm.DP_SCAFFOLD_WARM, engine.Algorithm.DP_FEDAVG):
        accs = []
        for seed in (1, 2, 3):
            cfg = engine.TrainConfig(algo, rounds=20, local_steps=K, user_ratio=l, data_ratio=s,
                                     eta0=eta0, sigma_g=sigma, clip_mode="median", clip_c=1.0, seed=seed)
            tr = engine.run(cfg, data, model, record_metrics=False)
            accs.append(metrics.mean_test_accuracy(data, model, tr.final_params))
        out[algo.value] = (float(np.mean(accs)), accs)
    a, b = out["dp-scaffold-warm"], out["dp-fedavg"]
    print(f"l={l} s={s} K={K} eta0={eta0} sg={sigma}: scafw={a[0]:.3f}{np.round(a[1],2)} fedavg={b[0]:.3f}{np.round(b[1],2)}", flush=True)
