import numpy as np
from dpfed import datagen, engine, models, metrics

data = datagen.synth_generate(datagen.SynthConfig(users=100, records=5000, alpha=5.0, beta=5.0, seed=1))
model = models.LogisticRegression(40, 10, l2=5e-3)

cells = [  # (sigma, K, T, paper_acc)
    (10.0, 5, 488, 45.53),
    (160.0, 5, 506, 15.99),
    (10.0, 40, 72, 21.80),
    (10.0, 1, 542, 27.41),
    (0.0, 5, 488, None),   # non-private ceiling at same schedule
]
for sigma, K, T, paper in cells:
    algo = engine.Algorithm.DP_SCAFFOLD if sigma > 0 else engine.Algorithm.SCAFFOLD
    kw = dict(clip_mode="median", clip_c=1.0) if sigma > 0 else {}
    cfg = engine.TrainConfig(algo, rounds=T, local_steps=K, user_ratio=0.05, data_ratio=0.2,
                             eta0=0.3, sigma_g=sigma, seed=100, **kw)
    trace = engine.run(cfg, data, model, record_metrics=False)
    acc = metrics.mean_test_accuracy(data, model, trace.final_params)
    print(f"sigma={sigma:5.0f} K={K:2d} T={T}: acc={100*acc:.2f} (paper: {paper})")
