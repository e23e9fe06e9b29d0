import numpy as np
from dpfed import datagen, engine, models, metrics

data = datagen.synth_generate(datagen.SynthConfig(users=100, records=5000, alpha=0.0, beta=0.0, seed=1))
model = models.LogisticRegression(40, 10, l2=5e-3)
for sigma, K, T, paper in [(10.0, 5, 488, 44.37), (160.0, 5, 506, 15.37)]:
    cfg = engine.TrainConfig(engine.Algorithm.DP_SCAFFOLD, rounds=T, local_steps=K,
                             user_ratio=0.05, data_ratio=0.2, eta0=0.3, sigma_g=sigma,
                             clip_mode="median", clip_c=1.0, seed=100)
    trace = engine.run(cfg, data, model, record_metrics=False)
    acc = metrics.mean_test_accuracy(data, model, trace.final_params)
    print(f"(0,0) sigma={sigma:5.0f} K={K}: acc={100*acc:.2f} (paper: {paper})")
# non-private ceiling on (0,0)
cfg = engine.TrainConfig(engine.Algorithm.SCAFFOLD, rounds=488, local_steps=5,
                         user_ratio=0.05, data_ratio=0.2, eta0=0.3, seed=100)
trace = engine.run(cfg, data, model, record_metrics=False)
print("(0,0) non-private ceiling:", round(100*metrics.mean_test_accuracy(data, model, trace.final_params), 2))
