"""Monte-Carlo estimators and closed forms for attention behavior under
CSBM feature noise: the attention-weighted neighbor-label score R and its
class-conditional signal-to-noise ratio, expected coordinate distances under
coordinate-missing noise, logit gap and variance bounds, the softmax
concentration quantity, and the first-order softmax expansion.

Aggregation here is over the plain neighborhood without self-loops,
conditioned on neighborhood size K > 1 (fixed-K mode may set any K >= 1
explicitly, e.g. the K = 1 temperature-invariance control).

Estimator determinism: a seed spawns one child stream per batch-means batch
with a fixed trial partition, so estimates are independent of execution
schedule. Standard errors come from the spread of per-batch estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .graph import CsbmParams, csbm_sample
from .noise import NoiseSetting, apply_noise
from . import autodiff


class DegenerateVarianceError(ArithmeticError):
    """Raised when a class-conditional variance estimate is not positive."""


@dataclass
class SnrEstimate:
    """One SNR measurement with its batch-means standard error."""

    value: float
    std_error: float
    trials: int
    conditioning: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.std_error < 0 or self.trials <= 0:
            raise ValueError("std_error must be >= 0 and trials positive")


@dataclass
class LogitStats:
    """Class-conditional logit moments under coordinate-missing noise.

    gap = mean_same - mean_diff (positive: same-class neighbors score
    higher). `variance` averages the two conditional variances; the
    per-condition values and batch-means standard errors ride along.
    """

    mean_same: float
    mean_diff: float
    gap: float
    variance: float
    var_same: float
    var_diff: float
    gap_std_error: float
    var_same_std_error: float
    var_diff_std_error: float
    conditioning: dict = field(default_factory=dict)


def r_score(alphas, labels):
    """Attention-weighted neighbor-label score sum(alpha_j * y_j) in [-1, 1]."""
    alphas = np.asarray(alphas, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if alphas.shape != labels.shape:
        raise ValueError("alphas and labels must have one entry per neighbor")
    if abs(alphas.sum() - 1.0) > 1e-9:
        raise ValueError("attention weights must sum to 1 within 1e-9")
    if np.any(alphas < -1e-12):
        raise ValueError("attention weights must be non-negative")
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise ValueError("labels must be +-1")
    return float(alphas @ labels)


def concentration(alphas):
    """sum(alpha^2): at least 1/K, with equality iff uniform."""
    alphas = np.asarray(alphas, dtype=np.float64)
    if abs(alphas.sum() - 1.0) > 1e-9 or np.any(alphas < -1e-12):
        raise ValueError("not a weight vector")
    return float(alphas @ alphas)


def a_tau(t, tau):
    """E|t - xi| for xi ~ N(0, tau^2), by the folded-normal mean.

    a_tau_quadrature integrates the defining expectation directly and serves
    as the independent fallback/oracle.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if tau == 0:
        return abs(float(t))
    z = abs(float(t)) / tau
    return tau * math.sqrt(2.0 / math.pi) * math.exp(-0.5 * z * z) + abs(
        float(t)
    ) * math.erf(z / math.sqrt(2.0))


def a_tau_quadrature(t, tau, tol=1e-10):
    """Adaptive quadrature of |t - x| against the N(0, tau^2) density."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if tau == 0:
        return abs(float(t))
    t = float(t)
    lo = min(t, 0.0) - 10.0 * tau
    hi = max(t, 0.0) + 10.0 * tau

    def integrand(x):
        return abs(t - x) * math.exp(-0.5 * (x / tau) ** 2) / (
            tau * math.sqrt(2.0 * math.pi)
        )

    value, _ = integrate.quad(
        integrand, lo, hi, points=[t], epsabs=tol, epsrel=tol, limit=200
    )
    return value


def b_tau(tau):
    """E|xi1 - xi2| = 2 tau / sqrt(pi) for i.i.d. N(0, tau^2)."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    return 2.0 * tau / math.sqrt(math.pi)


def expected_distance(same_class, mu_l, rho, tau, gated=False, weight=1.0):
    """Per-coordinate expected l1 distance under coordinate-missing noise.

    Ungated: 2 rho (1-rho) A_tau(|mu|) + rho^2 B_tau, plus 2 (1-rho)^2 |mu|
    for a different-class pair. Oracle-gated: 2 rho (1-rho) |mu| same-class,
    2 (1-rho) |mu| different-class. `weight` scales the coordinate's
    contribution to a logit.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    if tau < 0:
        raise ValueError("tau must be non-negative")
    am = abs(float(mu_l))
    if gated:
        value = 2.0 * rho * (1.0 - rho) * am
        if not same_class:
            value = 2.0 * (1.0 - rho) * am
    else:
        value = 2.0 * rho * (1.0 - rho) * a_tau(am, tau) + rho * rho * b_tau(tau)
        if not same_class:
            value += 2.0 * (1.0 - rho) ** 2 * am
    return weight * value


def logit_gap(mu, w, rho):
    """Class-separation logit gap 2 (1-rho)^2 sum(w |mu|), shared by the
    ungated and oracle-gated logits."""
    mu = np.asarray(mu, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    return float(2.0 * (1.0 - rho) ** 2 * np.sum(w * np.abs(mu)))


def variance_bounds(mu, w, rho, tau):
    """(gated upper bound 4 sum(w^2 mu^2), ungated lower bound
    2 rho^2 (1 - 2/pi) tau^2 sum(w^2)) on the conditional logit variance."""
    mu = np.asarray(mu, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    gated_upper = float(4.0 * np.sum(w * w * mu * mu))
    ungated_lower = float(
        2.0 * rho * rho * (1.0 - 2.0 / math.pi) * tau * tau * np.sum(w * w)
    )
    return gated_upper, ungated_lower


def softmax_first_order(e, temperature):
    """First-order softmax expansion 1/K + (e - mean(e)) / (K T).

    Returns (approx, exact, max absolute error). The error is second order:
    doubling T divides it by ~4 once max|e - mean(e)| / T is small.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    e = np.asarray(e, dtype=np.float64)
    k = e.size
    z = e / temperature
    z = z - z.max()
    ez = np.exp(z)
    exact = ez / ez.sum()
    approx = 1.0 / k + (e - e.mean()) / (k * temperature)
    return approx, exact, float(np.max(np.abs(approx - exact)))


# ---------------------------------------------------------------------------
# Monte-Carlo estimators
# ---------------------------------------------------------------------------


def _batch_sizes(trials, batches):
    base, rem = divmod(trials, batches)
    return [base + (1 if i < rem else 0) for i in range(batches)]


def _row_softmax(e, temperature):
    z = e / temperature
    z = z - z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    alpha = ez / ez.sum(axis=1, keepdims=True)
    return alpha


def _class_stats(r_values, y_targets):
    pos = y_targets > 0
    rp, rn = r_values[pos], r_values[~pos]
    return np.array(
        [rp.size, rp.sum(), (rp * rp).sum(), rn.size, rn.sum(), (rn * rn).sum()]
    )


def _snr_from_stats(stats):
    n_pos, s_pos, q_pos, n_neg, s_neg, q_neg = stats
    if n_pos < 2 or n_neg < 2:
        raise DegenerateVarianceError("too few trials in a class")
    m_pos, m_neg = s_pos / n_pos, s_neg / n_neg
    v_pos = (q_pos - n_pos * m_pos * m_pos) / (n_pos - 1)
    v_neg = (q_neg - n_neg * m_neg * m_neg) / (n_neg - 1)
    denom = v_pos + v_neg
    if denom <= 0:
        raise DegenerateVarianceError("class-conditional variances vanish")
    return (m_pos - m_neg) / math.sqrt(denom)


def _draw_noisy(rng, y, mu, noise, shape_prefix):
    """Features for labels y (+-1) under a noise setting; returns (h, keep)."""
    clean = y.reshape(shape_prefix + (1,)) * mu.reshape((1,) * len(shape_prefix) + (-1,))
    d = mu.size
    if noise.kind == "none":
        return clean, None
    if noise.kind == "gaussian":
        return clean + noise.sigma * rng.standard_normal(shape_prefix + (d,)), None
    keep = (rng.random(shape_prefix + (d,)) >= noise.rho).astype(np.float64)
    fill = noise.tau * rng.standard_normal(shape_prefix + (d,))
    return keep * clean + (1.0 - keep) * fill, keep


def _draw_neighborhood_sizes(rng, params, count):
    """Exact CSBM in-neighborhood law conditioned on K > 1.

    M ~ Bin(n-1, 1/2) same-class candidates, S ~ Bin(M, a/n) same-class
    neighbors, D ~ Bin(n-1-M, b/n) different-class; rejected (K <= 1) trials
    are redrawn.
    """
    k_out = np.zeros(count, dtype=np.int64)
    s_out = np.zeros(count, dtype=np.int64)
    todo = np.arange(count)
    while todo.size:
        m = rng.binomial(params.n - 1, 0.5, size=todo.size)
        s = rng.binomial(m, params.a / params.n)
        d = rng.binomial(params.n - 1 - m, params.b / params.n)
        k = s + d
        ok = k > 1
        k_out[todo[ok]] = k[ok]
        s_out[todo[ok]] = s[ok]
        todo = todo[~ok]
    return k_out, s_out


def _snr_batch(rng, params, noise, w, temperature, gate, nb, fixed_k):
    mu = params.mu
    n_pos = (nb + 1) // 2
    y_i = np.concatenate([np.ones(n_pos), -np.ones(nb - n_pos)])
    if fixed_k is not None:
        k_arr = np.full(nb, fixed_k, dtype=np.int64)
        p_same = params.a / (params.a + params.b)
        same = rng.random((nb, fixed_k)) < p_same
    else:
        k_arr, s_arr = _draw_neighborhood_sizes(rng, params, nb)
        same = None  # built per bucket from s_arr
    stats = np.zeros(6)
    for k in np.unique(k_arr):
        idx = np.flatnonzero(k_arr == k)
        yi = y_i[idx]
        if same is not None:
            same_k = same[idx]
        else:
            same_k = np.arange(k)[None, :] < s_arr[idx][:, None]
        y_slot = np.where(same_k, yi[:, None], -yi[:, None])
        h_i, keep_i = _draw_noisy(rng, yi, mu, noise, (idx.size,))
        h_j, keep_j = _draw_noisy(rng, y_slot, mu, noise, (idx.size, int(k)))
        if gate == "oracle":
            h_i = keep_i * h_i
            h_j = keep_j * h_j
        dist = np.abs(h_i[:, None, :] - h_j)
        e = -np.einsum("l,skl->sk", w, dist)
        alpha = _row_softmax(e, temperature)
        r = np.sum(alpha * y_slot, axis=1)
        stats += _class_stats(r, yi)
    return stats


def snr_monte_carlo(
    params,
    noise,
    w,
    temperature,
    gate="none",
    trials=100_000,
    seed=0,
    fixed_k=None,
    batches=20,
):
    """Estimate SNR(T) = (E[R|+1] - E[R|-1]) / sqrt(Var[R|+1] + Var[R|-1])
    by direct neighborhood resampling.

    Neighbor labels have mean m * y_i (exact conditional composition in
    degree-law mode; i.i.d. with P(same) = a/(a+b) in fixed-K mode), features
    follow the noise setting, logits are weighted-l1, and gate="oracle"
    applies the keep-mask gate before scoring (missing noise only).
    Degenerate variances raise rather than report a number.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if trials < 1000:
        raise ValueError("need at least 1000 trials")
    if gate not in ("none", "oracle"):
        raise ValueError("gate must be 'none' or 'oracle'")
    if gate == "oracle" and noise.kind != "missing":
        raise ValueError("the oracle gate needs coordinate-missing noise")
    if fixed_k is not None and fixed_k < 1:
        raise ValueError("fixed_k must be >= 1")
    w = np.asarray(w, dtype=np.float64)
    if w.shape != params.mu.shape or np.any(w <= 0):
        raise ValueError("w must be positive and match mu")
    children = np.random.SeedSequence(seed).spawn(batches)
    totals = np.zeros(6)
    batch_values = []
    for child, nb in zip(children, _batch_sizes(trials, batches)):
        rng = np.random.default_rng(child)
        stats = _snr_batch(rng, params, noise, w, temperature, gate, nb, fixed_k)
        batch_values.append(_snr_from_stats(stats))
        totals += stats
    value = _snr_from_stats(totals)
    std_error = float(np.std(batch_values, ddof=1) / math.sqrt(batches))
    return SnrEstimate(
        value=value,
        std_error=std_error,
        trials=trials,
        conditioning={
            "k": "fixed %d" % fixed_k if fixed_k is not None else "degree law, K>1",
            "temperature": temperature,
            "noise": noise,
            "gate": gate,
        },
    )


def logit_pair_monte_carlo(mu, w, rho, tau, gated, trials=100_000, seed=0, batches=20):
    """Class-conditional logit moments from sampled node pairs.

    Draws (h_i, h_j) under coordinate-missing noise for a same-class and a
    different-class pair per trial, optionally oracle-gated, and returns
    LogitStats with batch-means standard errors.
    """
    mu = np.asarray(mu, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if np.any(w <= 0) or w.shape != mu.shape:
        raise ValueError("w must be positive and match mu")
    noise = NoiseSetting(kind="missing", rho=rho, tau=tau)
    children = np.random.SeedSequence(seed).spawn(batches)
    sums = np.zeros((2, 3))  # per condition: count, sum, sumsq
    per_batch = np.zeros((batches, 2, 2))  # batch x condition x (mean, var)
    for b, (child, nb) in enumerate(zip(children, _batch_sizes(trials, batches))):
        rng = np.random.default_rng(child)
        for cond, y_j in enumerate((1.0, -1.0)):  # 0: same class, 1: different
            yi = np.ones(nb)
            yj = np.full(nb, y_j)
            h_i, keep_i = _draw_noisy(rng, yi, mu, noise, (nb,))
            h_j, keep_j = _draw_noisy(rng, yj, mu, noise, (nb,))
            if gated:
                h_i = keep_i * h_i
                h_j = keep_j * h_j
            e = -np.abs(h_i - h_j) @ w
            sums[cond] += (nb, e.sum(), (e * e).sum())
            per_batch[b, cond] = (e.mean(), e.var(ddof=1))
    means = sums[:, 1] / sums[:, 0]
    variances = (sums[:, 2] - sums[:, 0] * means**2) / (sums[:, 0] - 1)
    gap_se = float(
        np.std(per_batch[:, 0, 0] - per_batch[:, 1, 0], ddof=1) / math.sqrt(batches)
    )
    vs_se = float(np.std(per_batch[:, 0, 1], ddof=1) / math.sqrt(batches))
    vd_se = float(np.std(per_batch[:, 1, 1], ddof=1) / math.sqrt(batches))
    return LogitStats(
        mean_same=float(means[0]),
        mean_diff=float(means[1]),
        gap=float(means[0] - means[1]),
        variance=float(variances.mean()),
        var_same=float(variances[0]),
        var_diff=float(variances[1]),
        gap_std_error=gap_se,
        var_same_std_error=vs_se,
        var_diff_std_error=vd_se,
        conditioning={"rho": rho, "tau": tau, "gated": gated},
    )


def snr_whole_graph(params, noise, w, temperature, gate="none", num_graphs=20, seed=0):
    """Slow cross-check: the same SNR measured on whole sampled CSBM graphs.

    Every node with in-neighborhood size K > 1 contributes one R_i; each
    sampled graph forms one batch for the standard error.
    """
    if gate not in ("none", "oracle"):
        raise ValueError("gate must be 'none' or 'oracle'")
    if gate == "oracle" and noise.kind != "missing":
        raise ValueError("the oracle gate needs coordinate-missing noise")
    w = np.asarray(w, dtype=np.float64)
    root = np.random.SeedSequence(seed)
    graph_seeds = [int(c.generate_state(1)[0]) for c in root.spawn(2 * num_graphs)]
    totals = np.zeros(6)
    batch_values = []
    trials = 0
    for g_idx in range(num_graphs):
        world = CsbmParams(
            n=params.n, a=params.a, b=params.b, mu=params.mu,
            seed=graph_seeds[2 * g_idx],
        )
        ds = csbm_sample(world)
        setting = NoiseSetting(
            kind=noise.kind, sigma=noise.sigma, rho=noise.rho, tau=noise.tau,
            seed=graph_seeds[2 * g_idx + 1],
        )
        feats, keep = apply_noise(ds.features, setting)
        if gate == "oracle":
            feats = keep * feats
        src, dst = ds.graph.edge_endpoints()
        e = -np.abs(feats[dst] - feats[src]) @ w
        offsets = ds.graph.row_offsets
        counts = np.diff(offsets)
        z = e / temperature
        seg_max = np.maximum.reduceat(z, np.minimum(offsets[:-1], max(e.size - 1, 0)))
        ez = np.exp(z - np.repeat(seg_max, counts))
        denom = np.repeat(autodiff._reduceat_sum(ez, offsets), counts)
        alpha = ez / denom
        y = ds.signed_labels()
        r_all = autodiff._reduceat_sum(alpha * y[src], offsets)
        qualify = counts > 1
        stats = _class_stats(r_all[qualify], y[qualify])
        totals += stats
        trials += int(qualify.sum())
        batch_values.append(_snr_from_stats(stats))
    value = _snr_from_stats(totals)
    std_error = float(np.std(batch_values, ddof=1) / math.sqrt(len(batch_values)))
    return SnrEstimate(
        value=value,
        std_error=std_error,
        trials=trials,
        conditioning={
            "k": "whole graph, K>1",
            "temperature": temperature,
            "noise": noise,
            "gate": gate,
        },
    )
