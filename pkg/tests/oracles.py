"""Independent reference implementations used only by the tests."""
import math

import numpy as np


def brute_force_incidence(x, k):
    """Per-centre full sort with an explicit (weight desc, index asc) key."""
    n = len(x)
    h = np.zeros((n, n))
    for j in range(n):
        others = [i for i in range(n) if i != j]
        ranked = sorted(others, key=lambda i: (-float(x[j][i]), i))
        h[j][j] = 1.0
        for i in ranked[:k]:
            h[i][j] = 1.0
    return h


def loop_propagation(h):
    """Dv^-1/2 H De^-1 H^T Dv^-1/2 by explicit sums (unit edge weights)."""
    n, e = h.shape
    dv = [sum(h[v][c] for c in range(e)) for v in range(n)]
    de = [sum(h[v][c] for v in range(n)) for c in range(e)]
    out = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            s = 0.0
            for c in range(e):
                s += h[a][c] * h[b][c] / de[c]
            out[a][b] = s / math.sqrt(dv[a] * dv[b])
    return out


def constant_classifier_accuracy(y, test_idx):
    """Best accuracy of a constant prediction on a test set."""
    yt = np.asarray(y)[test_idx]
    return max(np.mean(yt == 1), np.mean(yt == -1))


def kink_free_instance(seed, n=6, m=2, latent=3, hidden=4, disc_hidden=(64, 16), margin=1e-3):
    """Small HCAE problem whose ReLU pre-activations all sit at least
    ``margin`` away from zero, so central differences never straddle a kink.

    Returns ``(problem, params, z_probe, real_probe)`` where the probes are the
    inputs used for the discriminator check.
    """
    from hyperconnectome.data import ConnectivityMatrix, MultiViewConnectome
    from hyperconnectome.hcae import HcaeConfig, SubjectProblem, _mlp_forward, init_params
    from hyperconnectome.hypergraph import build_hyperconnectome

    rng = np.random.default_rng(seed)
    views = []
    for b in range(m):
        a = np.triu(rng.uniform(0, 1, size=(n, n)), 1)
        views.append(ConnectivityMatrix(a + a.T, b + 1))
    subject = MultiViewConnectome(f"s{seed}", tuple(views))
    cfg = HcaeConfig(hidden_dim=hidden, latent_dim=latent, disc_hidden_dims=disc_hidden, k=2, seed=seed)
    problem = SubjectProblem.build(*build_hyperconnectome(subject, cfg.k))

    def hidden_margin(layers, x):
        _, cache = _mlp_forward(x, layers)
        return min(np.min(np.abs(pre)) for _, pre in cache[1:])

    for _ in range(10000):
        params = init_params(n, m, cfg, seed=int(rng.integers(2**31)))
        a1 = problem.propagated @ params.theta1
        if np.min(np.abs(a1)) < margin:
            continue
        params.disc = [(w, rng.normal(0, 0.3, size=b.shape)) for w, b in params.disc]
        z = problem.delta @ np.maximum(a1, 0) @ params.theta2
        z_probe, real_probe = rng.normal(size=(n, latent)), rng.normal(size=(n, latent))
        cache_inputs = [z, z_probe, real_probe]
        first = [np.min(np.abs(x @ params.disc[0][0] + params.disc[0][1])) for x in cache_inputs]
        deeper = [hidden_margin(params.disc, x) for x in cache_inputs] if len(params.disc) > 2 else [np.inf]
        if min(first) >= margin and min(deeper) >= margin:
            return problem, params, z_probe, real_probe
    raise RuntimeError(f"no kink-free instance found for seed {seed}")
