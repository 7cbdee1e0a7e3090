"""Monte-Carlo estimate of how often the EAL argmin over the four-model
candidate set recovers the generating model.

Independent of the Rust code: numpy sampling, scipy optimizers.

    python3 tools/eal_oracle.py --trials 500 --long-trials 100
"""
import argparse
import math

import numpy as np
from scipy import optimize, special, stats

DEFAULTS = {
    "LinearWiener": dict(m=0.5, s=0.4),
    "NonlinearWiener": dict(m=0.3, s=0.4, beta=1.5),
    "HomogGamma": dict(alpha=0.5, theta=1.0),
    "NonHomogGamma": dict(alpha=0.3, theta=1.0, beta=1.5),
}
PARAMS = {"LinearWiener": 2, "NonlinearWiener": 3, "HomogGamma": 2, "NonHomogGamma": 3}
ORDER = ["LinearWiener", "NonlinearWiener", "HomogGamma", "NonHomogGamma"]


def dj(j, beta):
    return j ** beta - (j - 1) ** beta


def simulate(kind, rng, threshold, max_steps):
    p = DEFAULTS[kind]
    j = np.arange(1, max_steps + 1, dtype=float)
    d = dj(j, p.get("beta", 1.0))
    if kind.endswith("Wiener"):
        inc = rng.normal(p["m"] * d, p["s"])
    else:
        inc = rng.gamma(p["alpha"] * d, p["theta"])
    x = np.concatenate([[0.0], np.cumsum(inc)])
    hit = np.nonzero(x >= threshold)[0]
    if len(hit) == 0:
        return None if math.isfinite(threshold) else x
    return x[: hit[0] + 1]


def wiener_ll(delta, mean):
    var = max(np.mean((delta - mean) ** 2), 1e-12)
    return float(-0.5 * len(delta) * (math.log(2 * math.pi * var) + 1.0))


def gamma_ll(delta, shapes, theta):
    shapes = np.broadcast_to(shapes, delta.shape)
    return float(np.sum((shapes - 1) * np.log(delta) - delta / theta - special.gammaln(shapes) - shapes * math.log(theta)))


def profile(fn):
    grid = np.exp(np.linspace(math.log(0.2), math.log(5.0), 60))
    vals = [fn(b) for b in grid]
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(lambda b: -fn(b), bounds=(lo, hi), method="bounded", options={"xatol": 1e-7})
    return max(-res.fun, vals[i], fn(1.0))


def loglik(kind, delta):
    n = len(delta)
    j = np.arange(1, n + 1, dtype=float)
    if kind == "LinearWiener":
        return wiener_ll(delta, np.mean(delta))
    if kind == "NonlinearWiener":
        def at(beta):
            d = dj(j, beta)
            m = np.dot(delta, d) / np.dot(d, d)
            return wiener_ll(delta, m * d)
        return profile(at)
    if np.any(delta <= 0):
        return -math.inf
    if kind == "HomogGamma":
        a, _, scale = stats.gamma.fit(delta, floc=0)
        return gamma_ll(delta, a, scale)

    def at(beta):
        d = dj(j, beta)

        def nll(v):
            a, th = math.exp(v[0]), math.exp(v[1])
            return -gamma_ll(delta, a * d, th)

        a0 = np.mean(delta) ** 2 / max(np.var(delta), 1e-12)
        th0 = np.sum(delta) / (a0 * np.sum(d))
        res = optimize.minimize(nll, [math.log(a0), math.log(th0)], method="Nelder-Mead",
                                options={"xatol": 1e-9, "fatol": 1e-10, "maxiter": 4000})
        return -res.fun
    return profile(at)


def select(delta):
    n = len(delta)
    scored = []
    for kind in ORDER:
        ll = loglik(kind, delta)
        scored.append((-ll / n if math.isfinite(ll) else math.inf, PARAMS[kind], kind))
    return min(scored)[2]


def rate(trials_per_class, rng, truncated):
    hits = total = 0
    for kind in ORDER:
        for _ in range(trials_per_class):
            if truncated:
                x = None
                while x is None:
                    x = simulate(kind, rng, 50.0, 2000)
                fht = len(x) - 1
                cutoff = math.ceil(0.7 * fht - 1e-9)
                x = x[: cutoff + 1]
            else:
                x = simulate(kind, rng, math.inf, 500)
            hits += select(np.diff(x)) == kind
            total += 1
    return hits / total


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=500, help="per class, truncated at 70%%")
    ap.add_argument("--long-trials", type=int, default=100, help="per class, 500 increments")
    ap.add_argument("--seed", type=int, default=7)
    a = ap.parse_args()
    rng = np.random.default_rng(a.seed)
    print(f"truncated n=70: {rate(a.trials, rng, True):.4f}")
    print(f"long N=500:     {rate(a.long_trials, rng, False):.4f}")


if __name__ == "__main__":
    main()
