import numpy as np
from dpfed import datagen, engine, models, metrics

data = datagen.synth_generate(datagen.SynthConfig(users=100, records=5000, alpha=5.0, beta=5.0, seed=1))
model = models.LogisticRegression(40, 10, l2=5e-3)
X, y = data.train_pool()

def probe(algo, eta0, T, sigma):
    private = algo.private
    cfg = engine.TrainConfig(algo, rounds=T, local_steps=50, user_ratio=0.2, data_ratio=0.2,
                             eta0=eta0, sigma_g=sigma if private else 0.0,
                             clip_mode="median" if private else "fixed",
                             clip_c=1.0 if private else float("inf"), seed=100)
    trace = engine.run(cfg, data, model, record_metrics=False)
    return (metrics.mean_test_accuracy(data, model, trace.final_params),
            model.batch_loss(trace.final_params, X, y))

with open("tune_a4_results.txt", "w") as f:
    for eta0 in [0.3, 1.0]:
        a = probe(engine.Algorithm.DP_SCAFFOLD_WARM, eta0, 80, 60.0)
        b = probe(engine.Algorithm.DP_FEDAVG, eta0, 80, 60.0)
        c = probe(engine.Algorithm.SCAFFOLD, eta0, 80, 0.0)
        d = probe(engine.Algorithm.FEDAVG, eta0, 80, 0.0)
        line = (f"eta0={eta0}: dpscafw {100*a[0]:.1f}/{a[1]:.3f} dpfedavg {100*b[0]:.1f}/{b[1]:.3f} "
                f"gap={100*(a[0]-b[0]):.1f} | scaffold {100*c[0]:.1f}/{c[1]:.4f} fedavg {100*d[0]:.1f}/{d[1]:.4f}")
        print(line, flush=True)
        f.write(line + "\n")
        f.flush()
