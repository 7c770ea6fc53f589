import sdritz as sdr
import numpy as np

# Small run on the two-dimensional Dirichlet problem
cfg = sdr.TrainConfig.load('p3_desk.json')
cfg.iterations = 2000
cfg.lr_decay_every = 1000
checkpoint, history = sdr.train(cfg, out_dir='p3_run', verbose=True)
problem = cfg.make_problem()
u = checkpoint.realization(problem)
# Accuracy against the exact solution
report = sdr.relative_l2_error(problem, u, 100000)
print(report)
# Marginal density at the centre, next to the exact one
export = sdr.density_export(problem, u, np.array([0.5, 0.5]), 20000)
export.to_frame().to_csv('p3_density.csv', index=False)
# First-order optimality of the exact solution
exact = sdr.ExactRealization(problem)
for seed in range(3):
    v = sdr.admissible_direction(problem, seed)
    print(sdr.gateaux_residual(problem, exact, v, 100000))
