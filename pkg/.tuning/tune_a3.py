import time
import numpy as np
from dpfed import datagen, engine, models, metrics

data = datagen.synth_generate(datagen.SynthConfig(users=100, records=5000, alpha=5.0, beta=5.0, seed=1))
model = models.LogisticRegression(40, 10, l2=5e-3)

for eta0 in [0.3, 1.0, 2.0]:
    cfg = engine.TrainConfig(engine.Algorithm.DP_SCAFFOLD, rounds=488, local_steps=5,
                             user_ratio=0.05, data_ratio=0.2, eta0=eta0, sigma_g=10.0,
                             clip_mode="median", clip_c=1.0, seed=100)
    t0 = time.time()
    trace = engine.run(cfg, data, model, record_metrics=False)
    acc = metrics.mean_test_accuracy(data, model, trace.final_params)
    print(f"eta0={eta0}: final acc={acc:.4f} ({time.time()-t0:.0f}s)")
