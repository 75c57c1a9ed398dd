"""Hot numeric kernels for event training.

Every function here is written as plain Python over numpy arrays and
compiled with numba's ``@njit`` when available.  Set the environment
variable ``LATENTGUARD_BACKEND=numpy`` before import to skip compilation
and run the identical code interpreted (slow, but handy for debugging and
for benchmarking the JIT speedup; see ``benchmarks/bench_backends.py``).

The kernels must agree with the readable reference implementations in
``model.py`` and ``trainer.compute_gradients``; the test suite pins that
agreement.  Within one backend the chunk kernel is bit-identical to
replaying ``_train_event`` event by event, because it is the same
arithmetic in the same order.
"""

from __future__ import annotations

import math
import os

import numpy as np

ENV_BACKEND = "LATENTGUARD_BACKEND"

# Denominator clamp for the step-size rule (machine epsilon).
EPS_DENOM = 2.220446049250313e-16

# Multiplicative dual updates stay inside [MU_MIN, mu_max]; the lower floor
# keeps the rule responsive after long runs of satisfied constraints.
MU_MIN = 1e-300

# Event status codes returned by the chunk kernel.
STATUS_OK = 0
STATUS_DIVERGED = 1
STATUS_NUMERIC = 2

# Regularization / dual-control modes.
MODE_BASELINE = 0
MODE_ENTROPIC = 1
MODE_EUCLIDEAN = 2
MODE_NAIVE = 3


def _numba_requested() -> bool:
    choice = os.environ.get(ENV_BACKEND, "numba").strip().lower()
    if choice in ("numpy", "python", "off", "0"):
        return False
    if choice not in ("numba", "jit", "on", "1"):
        raise ValueError(f"unrecognized {ENV_BACKEND}={choice!r}")
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USING_NUMBA = _numba_requested()

if USING_NUMBA:
    from numba import njit

    def _compiled(fn):
        return njit(cache=True, nogil=True)(fn)

else:

    def _compiled(fn):
        return fn


@_compiled
def _sigmoid(t):
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


@_compiled
def _pair_block(i, j, n_feat):
    return i * n_feat - (i * (i + 1)) // 2 + (j - i - 1)


@_compiled
def _expand_user_row(out, vec, k, n_feat, pair_dim, single_dim):
    """Fill ``out`` (length N) with feature ``k``'s blocks, 1s elsewhere."""
    n_pairs = (n_feat * (n_feat - 1)) // 2
    for n in range(out.shape[0]):
        out[n] = 1.0
    col = 0
    for j in range(n_feat):
        if j == k:
            continue
        lo = k if k < j else j
        hi = j if k < j else k
        base = _pair_block(lo, hi, n_feat) * pair_dim
        for t in range(pair_dim):
            out[base + t] = vec[col + t]
        col += pair_dim
    base = n_pairs * pair_dim + k * single_dim
    for t in range(single_dim):
        out[base + t] = vec[col + t]


@_compiled
def _score(uvals, avals, bias, n_feat, pair_dim, single_dim, expanded, nu_u, nu_a):
    """Logit of one event; fills the ``expanded``/``nu_u``/``nu_a`` scratch."""
    n_full = nu_u.shape[0]
    for k in range(n_feat):
        _expand_user_row(expanded[k], uvals[k], k, n_feat, pair_dim, single_dim)
    for n in range(n_full):
        prod = 1.0
        for k in range(n_feat):
            prod *= expanded[k, n]
        nu_u[n] = prod
    for n in range(n_full):
        total = 0.0
        for r in range(avals.shape[0]):
            total += avals[r, n]
        nu_a[n] = total
    t = bias
    for n in range(n_full):
        t += nu_u[n] * nu_a[n]
    return t


@_compiled
def _msqr_row(row):
    total = 0.0
    for i in range(row.shape[0]):
        total += row[i] * row[i]
    return total / row.shape[0]


@_compiled
def _adagrad_apply(vals, acc, i, grad, eta0, alpha, beta_ada):
    """Accumulate |grad| into ``acc[i]`` and take the step on ``vals[i]``."""
    a = acc[i] + abs(grad)
    acc[i] = a
    denom = alpha + a ** beta_ada
    if denom < EPS_DENOM:
        denom = EPS_DENOM
    vals[i] -= (eta0 / denom) * grad


@_compiled
def _train_event(
    uvals,
    avals,
    uacc,
    aacc,
    ureg,
    areg,
    bias_state,
    y,
    eta0,
    alpha,
    beta_ada,
    n_feat,
    pair_dim,
    single_dim,
    expanded,
    nu_u,
    nu_a,
):
    """One gradient step, updating the gathered arrays in place.

    ``bias_state`` is ``[bias, bias_accumulator]``.  ``ureg``/``areg`` hold
    the per-vector regularization gradient coefficient (``lambda`` in
    baseline mode, ``2 mu_v / d_v`` in dual mode).  Returns the pre-update
    logit, or NaN (with no state written) when the score is non-finite.
    """
    t = _score(uvals, avals, bias_state[0], n_feat, pair_dim, single_dim, expanded, nu_u, nu_a)
    if not math.isfinite(t):
        return math.nan
    p = _sigmoid(t)
    g = p - y

    a = bias_state[1] + abs(g)
    bias_state[1] = a
    denom = alpha + a ** beta_ada
    if denom < EPS_DENOM:
        denom = EPS_DENOM
    bias_state[0] -= (eta0 / denom) * g

    n_full = nu_u.shape[0]
    for r in range(avals.shape[0]):
        c = areg[r]
        for n in range(n_full):
            grad = g * nu_u[n] + c * avals[r, n]
            _adagrad_apply(avals[r], aacc[r], n, grad, eta0, alpha, beta_ada)

    n_pairs = (n_feat * (n_feat - 1)) // 2
    for k in range(n_feat):
        c = ureg[k]
        col = 0
        for j in range(n_feat):
            if j == k:
                continue
            lo = k if k < j else j
            hi = j if k < j else k
            base = _pair_block(lo, hi, n_feat) * pair_dim
            for t_idx in range(pair_dim):
                n = base + t_idx
                others = 1.0
                for k2 in range(n_feat):
                    if k2 != k:
                        others *= expanded[k2, n]
                grad = g * nu_a[n] * others + c * uvals[k, col + t_idx]
                _adagrad_apply(uvals[k], uacc[k], col + t_idx, grad, eta0, alpha, beta_ada)
            col += pair_dim
        base = n_pairs * pair_dim + k * single_dim
        for t_idx in range(single_dim):
            n = base + t_idx
            others = 1.0
            for k2 in range(n_feat):
                if k2 != k:
                    others *= expanded[k2, n]
            grad = g * nu_a[n] * others + c * uvals[k, col + t_idx]
            _adagrad_apply(uvals[k], uacc[k], col + t_idx, grad, eta0, alpha, beta_ada)
    return t


@_compiled
def _dual_step(mu, m, rho, beta_dual, mode, naive_factor, mu_max):
    """One dual update; returns ``(new_mu, clamped)``."""
    if mode == MODE_ENTROPIC:
        ex = beta_dual * (m - rho)
        if ex > 700.0:
            return mu_max, True
        nxt = mu * math.exp(ex)
        if nxt > mu_max:
            return mu_max, True
        if nxt < MU_MIN:
            nxt = MU_MIN
        return nxt, False
    if mode == MODE_EUCLIDEAN:
        nxt = mu + beta_dual * (m - rho)
        if nxt < 0.0:
            nxt = 0.0
        return nxt, False
    # naive multiplicative control
    if m > rho:
        return mu * naive_factor, False
    return mu / naive_factor, False


@_compiled
def _train_chunk(
    upool,
    apool,
    uaccpool,
    aaccpool,
    umu,
    amu,
    bias_state,
    uidx,
    aidx_flat,
    aoff,
    ys,
    ts,
    mode,
    lam,
    beta_dual,
    naive_factor,
    rho,
    mu_max,
    eta0,
    alpha,
    beta_ada,
    tau,
    n_feat,
    pair_dim,
    single_dim,
    out_logit,
    ucount,
    acount,
    ulast,
    alast,
):
    """Train one pass over an encoded chunk of events.

    Per event: primal gradient step, divergence check over the touched
    rows, then (in dual modes) dual ascent on their multipliers.  Aborts at
    the first event whose touched rows reach ``tau`` in infinity norm or go
    non-finite.  Returns ``(events_done, status, n_mu_clamped)``.
    """
    n_events = uidx.shape[0]
    d = upool.shape[1]
    n_full = apool.shape[1]

    expanded = np.empty((n_feat, n_full))
    nu_u = np.empty(n_full)
    nu_a = np.empty(n_full)
    uvals = np.empty((n_feat, d))
    uacc = np.empty((n_feat, d))
    ureg = np.empty(n_feat)

    max_ads = 0
    for e in range(n_events):
        c = aoff[e + 1] - aoff[e]
        if c > max_ads:
            max_ads = c
    avals_buf = np.empty((max_ads, n_full))
    aacc_buf = np.empty((max_ads, n_full))
    areg_buf = np.empty(max_ads)

    n_clamped = 0
    for e in range(n_events):
        n_ads = aoff[e + 1] - aoff[e]
        for k in range(n_feat):
            row = uidx[e, k]
            for i in range(d):
                uvals[k, i] = upool[row, i]
                uacc[k, i] = uaccpool[row, i]
            ureg[k] = lam if mode == MODE_BASELINE else 2.0 * umu[row] / d
        for r in range(n_ads):
            row = aidx_flat[aoff[e] + r]
            for i in range(n_full):
                avals_buf[r, i] = apool[row, i]
                aacc_buf[r, i] = aaccpool[row, i]
            areg_buf[r] = lam if mode == MODE_BASELINE else 2.0 * amu[row] / n_full

        t = _train_event(
            uvals,
            avals_buf[:n_ads],
            uacc,
            aacc_buf[:n_ads],
            ureg,
            areg_buf[:n_ads],
            bias_state,
            ys[e],
            eta0,
            alpha,
            beta_ada,
            n_feat,
            pair_dim,
            single_dim,
            expanded,
            nu_u,
            nu_a,
        )
        out_logit[e] = t
        if not math.isfinite(t):
            return e + 1, STATUS_NUMERIC, n_clamped

        status = STATUS_OK
        for k in range(n_feat):
            row = uidx[e, k]
            for i in range(d):
                v = uvals[k, i]
                upool[row, i] = v
                uaccpool[row, i] = uacc[k, i]
                if not math.isfinite(v):
                    status = STATUS_NUMERIC
                elif abs(v) >= tau and status == STATUS_OK:
                    status = STATUS_DIVERGED
            ucount[row] += 1
            ulast[row] = ts[e]
        for r in range(n_ads):
            row = aidx_flat[aoff[e] + r]
            for i in range(n_full):
                v = avals_buf[r, i]
                apool[row, i] = v
                aaccpool[row, i] = aacc_buf[r, i]
                if not math.isfinite(v):
                    status = STATUS_NUMERIC
                elif abs(v) >= tau and status == STATUS_OK:
                    status = STATUS_DIVERGED
            acount[row] += 1
            alast[row] = ts[e]
        if status != STATUS_OK:
            return e + 1, status, n_clamped

        if mode != MODE_BASELINE:
            for k in range(n_feat):
                row = uidx[e, k]
                nxt, clamped = _dual_step(
                    umu[row], _msqr_row(upool[row]), rho, beta_dual, mode, naive_factor, mu_max
                )
                umu[row] = nxt
                if clamped:
                    n_clamped += 1
            for r in range(n_ads):
                row = aidx_flat[aoff[e] + r]
                nxt, clamped = _dual_step(
                    amu[row], _msqr_row(apool[row]), rho, beta_dual, mode, naive_factor, mu_max
                )
                amu[row] = nxt
                if clamped:
                    n_clamped += 1
    return n_events, STATUS_OK, n_clamped


def py_func(fn):
    """The interpreted version of a kernel (itself when not compiled)."""
    return getattr(fn, "py_func", fn)
