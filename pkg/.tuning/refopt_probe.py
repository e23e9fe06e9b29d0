import time
import numpy as np
from dpfed import datagen, metrics, models

data = datagen.synth_generate(datagen.SynthConfig(users=100, records=5000, alpha=5.0, beta=5.0, seed=1))
model = models.LogisticRegression(40, 10, l2=5e-3)
t0 = time.time()
x_star, f_star, info = metrics.reference_optimum(data, model)
print(f"refopt: {time.time()-t0:.1f}s F*={f_star:.6f} gnorm={info['grad_norm']:.2e} iters={info['iterations']} converged={info['converged']}", flush=True)
np.save("refopt_xstar.npy", x_star)
