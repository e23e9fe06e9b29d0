import time
import numpy as np
from dpfed import datagen, engine, models, metrics

data = datagen.synth_generate(datagen.SynthConfig(users=100, records=5000, alpha=5.0, beta=5.0, seed=1))
model = models.LogisticRegression(40, 10, l2=5e-3)
X, y = data.train_pool()

def probe(algo, eta0, T, sigma=60.0, private=True):
    if private:
        cfg = engine.TrainConfig(algo, rounds=T, local_steps=50, user_ratio=0.2, data_ratio=0.2,
                                 eta0=eta0, sigma_g=sigma, clip_mode="median", clip_c=1.0, seed=100)
    else:
        cfg = engine.TrainConfig(algo, rounds=T, local_steps=50, user_ratio=0.2, data_ratio=0.2,
                                 eta0=eta0, sigma_g=0.0, seed=100)
    trace = engine.run(cfg, data, model, record_metrics=False)
    acc = metrics.mean_test_accuracy(data, model, trace.final_params)
    loss = model.batch_loss(trace.final_params, X, y)
    return acc, loss

for eta0 in [1.0, 2.0, 3.0]:
    a1 = probe(engine.Algorithm.DP_SCAFFOLD_WARM, eta0, 100)
    a2 = probe(engine.Algorithm.DP_FEDAVG, eta0, 100)
    print(f"eta0={eta0}: dp-scaffold-warm acc={a1[0]:.3f} loss={a1[1]:.3f} | dp-fedavg acc={a2[0]:.3f} loss={a2[1]:.3f} | gap={100*(a1[0]-a2[0]):.1f}pts")

for eta0 in [1.0, 2.0]:
    b1 = probe(engine.Algorithm.SCAFFOLD, eta0, 100, private=False)
    b2 = probe(engine.Algorithm.FEDAVG, eta0, 100, private=False)
    print(f"nonpriv eta0={eta0}: scaffold acc={b1[0]:.3f} loss={b1[1]:.4f} | fedavg acc={b2[0]:.3f} loss={b2[1]:.4f}")
