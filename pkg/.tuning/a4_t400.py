import numpy as np
from dpfed import datagen, engine, models, metrics

data = datagen.synth_generate(datagen.SynthConfig(users=100, records=5000, alpha=5.0, beta=5.0, seed=1))
model = models.LogisticRegression(40, 10, l2=5e-3)
X, y = data.train_pool()

with open("a4_t400_results.txt", "w") as f:
    for eta0 in (0.3, 1.0):
        res = {}
        for algo in (engine.Algorithm.DP_SCAFFOLD_WARM, engine.Algorithm.DP_FEDAVG,
                     engine.Algorithm.SCAFFOLD, engine.Algorithm.FEDAVG):
            private = algo.private
            cfg = engine.TrainConfig(algo, rounds=400, local_steps=50, user_ratio=0.2, data_ratio=0.2,
                                     eta0=eta0, sigma_g=60.0 if private else 0.0,
                                     clip_mode="median" if private else "fixed",
                                     clip_c=1.0 if private else float("inf"), seed=100)
            trace = engine.run(cfg, data, model, record_metrics=False)
            res[algo.value] = (100*metrics.mean_test_accuracy(data, model, trace.final_params),
                               model.batch_loss(trace.final_params, X, y))
            line = f"eta0={eta0} {algo.value}: acc={res[algo.value][0]:.2f} loss={res[algo.value][1]:.4f}"
            print(line, flush=True); f.write(line + "\n"); f.flush()
        gap = res["dp-scaffold-warm"][0] - res["dp-fedavg"][0]
        line = f"eta0={eta0}: ACC GAP={gap:.2f} | loss scaffold {res['scaffold'][1]:.4f} vs fedavg {res['fedavg'][1]:.4f}"
        print(line, flush=True); f.write(line + "\n"); f.flush()
