import numpy as np
from sklearn.datasets import load_digits
from dpfed import datagen, engine, metrics, models

digits = load_digits()
images = (digits.images * (255.0 / 16.0)).astype(np.uint8)
datagen.write_idx("dg_i.idx", "dg_l.idx", images, digits.target.astype(np.uint8))
features, labels = datagen.load_idx("dg_i.idx", "dg_l.idx")
raw = datagen.partition_by_similarity(features, labels, 10, 0.0, seed=5)
data = datagen.preprocess(raw)
pool_X, _ = data.train_pool()
P, mean, _ = models.pca_fit(pool_X, 60)
model = models.OneHiddenLayerNet(64, 10, hidden=200, pca_projection=P, pca_mean=mean, l2=5e-3)

for sigma, s, eta0 in [(10.0, 0.5, 0.5), (10.0, 0.5, 1.0), (5.0, 0.5, 1.0), (10.0, 1.0, 1.0)]:
    res = {}
    for algo in (engine.Algorithm.DP_SCAFFOLD, engine.Algorithm.DP_FEDAVG):
        accs = []
        for seed in (1, 2, 3):
            cfg = engine.TrainConfig(algo, rounds=20, local_steps=5, user_ratio=0.5, data_ratio=s,
                                     eta0=eta0, sigma_g=sigma, clip_mode="median", clip_c=1.0, seed=seed)
            tr = engine.run(cfg, data, model, record_metrics=False)
            accs.append(metrics.mean_test_accuracy(data, model, tr.final_params))
        res[algo.value] = float(np.mean(accs))
    print(f"sigma={sigma} s={s} eta0={eta0}: dp-scaffold={res['dp-scaffold']:.3f} dp-fedavg={res['dp-fedavg']:.3f}", flush=True)
