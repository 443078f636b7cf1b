"""Scratch grid search over synthetic-benchmark generator settings."""
import sys
import time

import numpy as np

from fairtrain.data import SyntheticConfig, generate_synthetic, stratified_split, fit_scaler, apply_scaler
from fairtrain.net import NetworkSpec
from fairtrain.problem import ConstraintSpec, FairnessProblem
from fairtrain.optim import (StGhConfig, AlmConfig, SswConfig, SgdConfig,
                             run_stgh, run_ssl_alm, run_alm, run_ssw, run_sgd)
from fairtrain.metrics import PredictionSet, independence_gap

SEEDS = 5


def build(sep, shift, hidden):
    gen = SyntheticConfig(n=10000, dim=6, group_weights=(0.7, 0.3),
                          positive_rates=(0.31, 0.21), seed=123,
                          class_sep=sep, group_shift=shift)
    ds = generate_synthetic(gen)
    split = stratified_split(ds, 0.8, 0)
    sc = fit_scaler(ds, split.train)
    ds.X = apply_scaler(sc, ds.X)
    spec = NetworkSpec(input_dim=6, hidden_dims=hidden)
    prob = FairnessProblem(spec, ds, split.train, split.test,
                           ConstraintSpec(kind="loss_gap", delta=0.01))
    return ds, split, spec, prob


def evaluate(sep, shift, hidden, stgh_k=4000, alm_k=30000):
    ds, split, spec, prob = build(sep, shift, hidden)

    def ind_of(xf):
        p = PredictionSet(scores=prob.scores(xf, split.train),
                          labels=ds.y[split.train], groups=ds.g[split.train])
        return independence_gap(p)

    algos = {
        "sgd": lambda rng, x0: run_sgd(prob, x0, SgdConfig(iterations=3000, lr=0.1, batch=64), rng),
        "stgh": lambda rng, x0: run_stgh(prob, x0, StGhConfig(iterations=stgh_k), rng),
        "alm": lambda rng, x0: run_alm(prob, x0, AlmConfig(iterations=alm_k, mu=0.0), rng),
        "ssl_alm": lambda rng, x0: run_ssl_alm(prob, x0, AlmConfig(iterations=alm_k, mu=2.0), rng),
        "ssw": lambda rng, x0: run_ssw(prob, x0, SswConfig(iterations=6000, eta_f=0.5, eta_c=0.05,
                                                           eps0=1e-4, switch_iter=500, decay=0.97,
                                                           batch=2048, k0=4500), rng),
    }
    out = {}
    for name, fn in algos.items():
        t = time.time()
        gaps, inds = [], []
        for seed in range(SEEDS):
            rng = np.random.default_rng(seed)
            x0 = spec.init_params(rng)
            xf = fn(rng, x0)
            _, c, _, _ = prob.log_eval(xf)
            gaps.append((c[0] - c[1]) / 2)
            inds.append(ind_of(xf))
        out[name] = (max(abs(g) for g in gaps), float(np.mean(inds)), time.time() - t)
    base = out["sgd"][1]
    print(f"--- sep={sep} shift={shift} hidden={hidden} stghK={stgh_k} almK={alm_k} "
          f"(SGD ind={base:.4f})", flush=True)
    for name in ("stgh", "alm", "ssl_alm", "ssw"):
        mg, mi, dt = out[name]
        cut = 100 * (1 - mi / base)
        ok = "OK " if (mg <= 0.03 and cut >= 30) else "BAD"
        print(f"  {ok} {name:8s} max|gap|={mg:.4f} ind={mi:.4f} cut={cut:+.0f}% [{dt:.0f}s]",
              flush=True)


if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "a"
    if which == "a":
        evaluate(0.6, 2.0, ())
        evaluate(0.6, 2.0, (4,), stgh_k=6000)
    else:
        evaluate(0.7, 2.0, ())
        evaluate(0.8, 2.0, ())
