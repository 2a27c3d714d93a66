"""Compiled inner loops shared by the sampler and the embedding engine.

All randomness inside the kernels comes from a splitmix64 stream whose whole
state is a single uint64 held in a one-element array, so it can be mutated in
place from nopython code and written verbatim into the model file.
"""
import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

MAX_NEG_REDRAWS = 8


@njit(cache=True, error_model="numpy")
def next_u64(state):
    z = state[0] + _GOLDEN
    state[0] = z
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, error_model="numpy")
def rand_below(state, n):
    """Uniform integer in [0, n)."""
    return np.int64(next_u64(state) % np.uint64(n))


@njit(cache=True, error_model="numpy")
def rand_unit(state):
    """Uniform float in [0, 1) with 53 random bits."""
    return np.float64(next_u64(state) >> _S11) * _INV53


@njit(cache=True, error_model="numpy")
def fill_u64(state, out):
    for i in range(out.shape[0]):
        out[i] = next_u64(state)


@njit(cache=True, error_model="numpy")
def sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


# -- reservoir ---------------------------------------------------------------

@njit(cache=True, error_model="numpy")
def reservoir_offer(slots, seen, rng, token):
    # 0-based form of: draw k in {1..seen}, replace slot k iff k <= K
    n = seen[0] + 1
    seen[0] = n
    cap = slots.shape[0]
    if n <= cap:
        slots[n - 1] = token
    else:
        k = rand_below(rng, n)
        if k < cap:
            slots[k] = token


@njit(cache=True, error_model="numpy")
def reservoir_offer_many(slots, seen, rng, tokens):
    for i in range(tokens.shape[0]):
        reservoir_offer(slots, seen, rng, tokens[i])


@njit(cache=True, error_model="numpy")
def reservoir_draw_many(slots, seen, rng, out):
    size = min(seen[0], slots.shape[0])
    for i in range(out.shape[0]):
        out[i] = slots[rand_below(rng, size)]


# -- alias table -------------------------------------------------------------

@njit(cache=True, error_model="numpy")
def alias_build(weights, prob, alias):
    n = weights.shape[0]
    total = 0.0
    for i in range(n):
        total += weights[i]
    scaled = np.empty(n)
    small = np.empty(n, np.int64)
    large = np.empty(n, np.int64)
    ns = 0
    nl = 0
    for i in range(n):
        scaled[i] = weights[i] * n / total
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        g = large[nl - 1]
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            nl -= 1
            small[ns] = g
            ns += 1
    while nl > 0:
        nl -= 1
        prob[large[nl]] = 1.0
        alias[large[nl]] = large[nl]
    while ns > 0:
        # leftovers from rounding drift
        ns -= 1
        prob[small[ns]] = 1.0
        alias[small[ns]] = small[ns]


@njit(cache=True, error_model="numpy")
def alias_draw_one(prob, alias, rng):
    i = rand_below(rng, prob.shape[0])
    if rand_unit(rng) < prob[i]:
        return i
    return alias[i]


@njit(cache=True, error_model="numpy")
def alias_draw_many(prob, alias, rng, out):
    for i in range(out.shape[0]):
        out[i] = alias_draw_one(prob, alias, rng)


# -- embedding ---------------------------------------------------------------

@njit(cache=True, error_model="numpy", fastmath=True)
def init_rows(T, lo, hi, rng):
    dim = T.shape[1]
    for r in range(lo, hi):
        for d in range(dim):
            T[r, d] = (rand_unit(rng) - 0.5) / dim


@njit(cache=True, error_model="numpy")
def draw_negatives(out, context, use_alias, slots, seen, alias_prob, alias_idx, rng):
    size = min(seen[0], slots.shape[0])
    for m in range(out.shape[0]):
        v = context
        for _ in range(MAX_NEG_REDRAWS):
            if use_alias:
                v = alias_draw_one(alias_prob, alias_idx, rng)
            else:
                v = slots[rand_below(rng, size)]
            if v != context:
                break
        out[m] = v


@njit(cache=True, error_model="numpy", fastmath=True)
def sgns_step(T, C, Gt, Gc, center, context, negs, eta0, eps, grad_t):
    """One AdaGrad step on -log s(t.c) - sum log s(-t.c_v)."""
    dim = T.shape[1]
    for d in range(dim):
        grad_t[d] = 0.0

    s = 0.0
    for d in range(dim):
        s += np.float64(T[center, d]) * np.float64(C[context, d])
    g = sigmoid(s) - 1.0
    for d in range(dim):
        c = np.float64(C[context, d])
        grad_t[d] += g * c
        gc = g * np.float64(T[center, d])
        acc = np.float64(Gc[context, d]) + gc * gc
        Gc[context, d] = acc
        C[context, d] = c - eta0 * gc / (np.sqrt(acc) + eps)

    for m in range(negs.shape[0]):
        v = negs[m]
        s = 0.0
        for d in range(dim):
            s += np.float64(T[center, d]) * np.float64(C[v, d])
        g = sigmoid(s)
        for d in range(dim):
            c = np.float64(C[v, d])
            grad_t[d] += g * c
            gc = g * np.float64(T[center, d])
            acc = np.float64(Gc[v, d]) + gc * gc
            Gc[v, d] = acc
            C[v, d] = c - eta0 * gc / (np.sqrt(acc) + eps)

    for d in range(dim):
        gt = grad_t[d]
        acc = np.float64(Gt[center, d]) + gt * gt
        Gt[center, d] = acc
        T[center, d] = np.float64(T[center, d]) - eta0 * gt / (np.sqrt(acc) + eps)


@njit(cache=True, error_model="numpy")
def pair_update(T, C, Gt, Gc, center, context, n_neg, eta0, eps,
                use_alias, slots, seen, alias_prob, alias_idx, rng):
    negs = np.empty(n_neg, np.int64)
    grad_t = np.empty(T.shape[1])
    draw_negatives(negs, context, use_alias, slots, seen, alias_prob, alias_idx, rng)
    sgns_step(T, C, Gt, Gc, center, context, negs, eta0, eps, grad_t)
    return negs


@njit(cache=True, error_model="numpy")
def train_docs(tokens, bounds, T, C, Gt, Gc, window, n_neg, eta0, eps,
               use_alias, slots, seen, res_rng, alias_prob, alias_idx, rng, do_offer):
    """Single pass over the flattened documents; returns the pair-update count."""
    negs = np.empty(n_neg, np.int64)
    grad_t = np.empty(T.shape[1])
    n_pairs = 0
    for doc in range(bounds.shape[0] - 1):
        lo = bounds[doc]
        hi = bounds[doc + 1]
        for i in range(lo, hi):
            center = tokens[i]
            if do_offer:
                reservoir_offer(slots, seen, res_rng, center)
            for p in range(max(lo, i - window), min(hi, i + window + 1)):
                if p == i:
                    continue
                context = tokens[p]
                draw_negatives(negs, context, use_alias, slots, seen,
                               alias_prob, alias_idx, rng)
                sgns_step(T, C, Gt, Gc, center, context, negs, eta0, eps, grad_t)
                n_pairs += 1
    return n_pairs
