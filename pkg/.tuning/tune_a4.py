import sys, time
import numpy as np
from dpfed import datagen, engine, models, metrics

t0 = time.time()
data = datagen.synth_generate(datagen.SynthConfig(users=100, records=5000, alpha=5.0, beta=5.0, seed=1))
print(f"datagen: {time.time()-t0:.1f}s")
model = models.LogisticRegression(40, 10, l2=5e-3)

T = int(sys.argv[1]) if len(sys.argv) > 1 else 60
for eta0 in [0.03, 0.1, 0.3, 1.0]:
    for algo in [engine.Algorithm.DP_SCAFFOLD_WARM, engine.Algorithm.DP_FEDAVG]:
        cfg = engine.TrainConfig(algo, rounds=T, local_steps=50, user_ratio=0.2, data_ratio=0.2,
                                 eta0=eta0, sigma_g=60.0, clip_mode="median", clip_c=1.0, seed=100)
        t0 = time.time()
        trace = engine.run(cfg, data, model, record_metrics=False)
        # evaluate at the end only (fast tuning)
        acc = metrics.mean_test_accuracy(data, model, trace.final_params)
        X, y = data.train_pool()
        loss = model.batch_loss(trace.final_params, X, y)
        print(f"eta0={eta0:5.2f} {algo.value:18s} T={T}: acc={acc:.3f} loss={loss:.4f} ({time.time()-t0:.0f}s)")
