import numpy as np
from dpfed import datagen, engine, metrics, models

features, labels = datagen.load_idx("dg_i.idx", "dg_l.idx")
raw = datagen.partition_by_similarity(features, labels, 10, 0.0, seed=5)
data = datagen.preprocess(raw)
pool_X, _ = data.train_pool()
P, mean, _ = models.pca_fit(pool_X, 60)
model = models.OneHiddenLayerNet(64, 10, hidden=200, pca_projection=P, pca_mean=mean, l2=5e-3)

cases = [
    (engine.Algorithm.DP_SCAFFOLD_WARM, 10.0, 1.0, 1.0, 5),
    (engine.Algorithm.DP_FEDAVG, 10.0, 1.0, 1.0, 5),
    (engine.Algorithm.DP_SCAFFOLD_WARM, 10.0, 0.5, 1.0, 10),
    (engine.Algorithm.DP_FEDAVG, 10.0, 0.5, 1.0, 10),
]
for algo, sigma, s, eta0, K in cases:
    accs = []
    for seed in (1, 2, 3):
        cfg = engine.TrainConfig(algo, rounds=20, local_steps=K, user_ratio=0.5, data_ratio=s,
                                 eta0=eta0, sigma_g=sigma, clip_mode="median", clip_c=1.0, seed=seed)
        tr = engine.run(cfg, data, model, record_metrics=False)
        accs.append(metrics.mean_test_accuracy(data, model, tr.final_params))
    print(f"{algo.value:18s} sigma={sigma} s={s} eta0={eta0} K={K}: {np.mean(accs):.3f} {np.round(accs,3)}", flush=True)
