"""Hot inner loops, each with a numba-compiled and a plain-numpy implementation.

The numba path is used when numba imports and ``MULTIGROUP_DISABLE_NUMBA`` is
unset (or ``0``). Both paths are always importable under ``*_numba`` /
``*_numpy`` names so tests and the benchmark can compare them directly.
"""
from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("MULTIGROUP_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _flag not in ("", "0", "false", "no")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def _njit(func):
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func


# ---------------------------------------------------------------------------
# sleeping-experts hedge: one pass over the stream
# ---------------------------------------------------------------------------

def _hedge_run_py(points, labels, awake, hyp, loss, log_sel, gain, eta, logw0):
    T = points.shape[0]
    nH, nG = logw0.shape
    logw = logw0.copy()
    snaps = np.empty((T, nH, nG))
    probs = np.zeros((T, nH, nG))
    lhat = np.empty(T)
    cum_loss = np.zeros((nH, nG))
    cum_mix = np.zeros((nH, nG))
    inst = np.empty(nH)
    for t in range(T):
        x = points[t]
        y = labels[t]
        snaps[t] = logw
        top = -np.inf
        for g in range(nG):
            if awake[g, x]:
                for h in range(nH):
                    s = logw[h, g] + log_sel[h, g]
                    if s > top:
                        top = s
        if top == -np.inf:
            raise ValueError("uncovered point: no expert is awake")
        z = 0.0
        for g in range(nG):
            if awake[g, x]:
                for h in range(nH):
                    p = np.exp(logw[h, g] + log_sel[h, g] - top)
                    probs[t, h, g] = p
                    z += p
        for h in range(nH):
            inst[h] = loss[hyp[h, x], y]
        mix = 0.0
        for g in range(nG):
            if awake[g, x]:
                for h in range(nH):
                    probs[t, h, g] /= z
                    mix += probs[t, h, g] * inst[h]
        lhat[t] = mix
        for g in range(nG):
            if awake[g, x]:
                for h in range(nH):
                    logw[h, g] += gain[h, g] * mix - eta[h, g] * inst[h]
                    cum_loss[h, g] += inst[h]
                    cum_mix[h, g] += mix
    return snaps, probs, lhat, logw, cum_loss, cum_mix


hedge_run_numba = _njit(_hedge_run_py)


def hedge_run_numpy(points, labels, awake, hyp, loss, log_sel, gain, eta, logw0):
    T = points.shape[0]
    nH, nG = logw0.shape
    logw = logw0.copy()
    snaps = np.empty((T, nH, nG))
    probs = np.zeros((T, nH, nG))
    lhat = np.empty(T)
    cum_loss = np.zeros((nH, nG))
    cum_mix = np.zeros((nH, nG))
    inst_all = loss[hyp[:, points], labels[None, :]]  # (H, T)
    for t in range(T):
        x = points[t]
        a = awake[:, x]
        if not a.any():
            raise ValueError("uncovered point: no expert is awake")
        snaps[t] = logw
        s = logw[:, a] + log_sel[:, a]
        p = np.exp(s - s.max())
        p /= p.sum()
        inst = inst_all[:, t]
        mix = float((p * inst[:, None]).sum())
        probs[t][:, a] = p
        lhat[t] = mix
        logw[:, a] += gain[:, a] * mix - eta[:, a] * inst[:, None]
        cum_loss[:, a] += inst[:, None]
        cum_mix[:, a] += mix
    return snaps, probs, lhat, logw, cum_loss, cum_mix


# ---------------------------------------------------------------------------
# per-snapshot, per-point risk of the hedge's internal hypotheses
# ---------------------------------------------------------------------------

def _snapshot_point_risk_py(snaps, log_sel, awake, point_loss):
    T, nH, nG = snaps.shape
    m = awake.shape[1]
    out = np.zeros((T, m))
    for t in range(T):
        for x in range(m):
            top = -np.inf
            for g in range(nG):
                if awake[g, x]:
                    for h in range(nH):
                        s = snaps[t, h, g] + log_sel[h, g]
                        if s > top:
                            top = s
            if top == -np.inf:
                continue
            num = 0.0
            den = 0.0
            for g in range(nG):
                if awake[g, x]:
                    for h in range(nH):
                        p = np.exp(snaps[t, h, g] + log_sel[h, g] - top)
                        num += p * point_loss[h, x]
                        den += p
            out[t, x] = num / den
    return out


snapshot_point_risk_numba = _njit(_snapshot_point_risk_py)


def snapshot_point_risk_numpy(snaps, log_sel, awake, point_loss, block=2048):
    T = snaps.shape[0]
    m = awake.shape[1]
    out = np.zeros((T, m))
    mask = awake[None, None, :, :]
    for lo in range(0, T, block):
        s = (snaps[lo:lo + block] + log_sel[None])[..., None]  # (b, H, G, 1)
        s = np.where(mask, s, -np.inf)  # (b, H, G, m)
        top = s.max(axis=(1, 2))  # (b, m)
        covered = np.isfinite(top)
        e = np.exp(s - np.where(covered, top, 0.0)[:, None, None, :]).sum(axis=2)  # (b, H, m)
        num = (e * point_loss[None]).sum(axis=1)
        den = e.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[lo:lo + block] = np.where(covered, num / den, 0.0)
    return out


# ---------------------------------------------------------------------------
# Prepend: repeated exhaustive argmax over (group, hypothesis)
# ---------------------------------------------------------------------------

def _prepend_loop_py(row_loss, row_groups, w, counts, eps, h0, max_rounds):
    nH, N = row_loss.shape
    nG = row_groups.shape[0]
    total = 0.0
    for i in range(N):
        total += w[i]
    f_loss = row_loss[h0].copy()
    hyp_risk = np.zeros((nG, nH))
    for g in range(nG):
        for h in range(nH):
            acc = 0.0
            for i in range(N):
                if row_groups[g, i]:
                    acc += w[i] * row_loss[h, i]
            hyp_risk[g, h] = acc / counts[g]
    gs = np.empty(max_rounds, dtype=np.int64)
    hs = np.empty(max_rounds, dtype=np.int64)
    viol = np.empty(max_rounds)
    before = np.empty(max_rounds)
    after = np.empty(max_rounds)
    f_risk = np.zeros(nG)
    rounds = 0
    while True:
        for g in range(nG):
            acc = 0.0
            for i in range(N):
                if row_groups[g, i]:
                    acc += w[i] * f_loss[i]
            f_risk[g] = acc / counts[g]
        best = -np.inf
        bg = -1
        bh = -1
        for g in range(nG):
            for h in range(nH):
                v = f_risk[g] - hyp_risk[g, h] - eps[g]
                if v > best:
                    best = v
                    bg = g
                    bh = h
        if bg < 0 or best < 0.0:
            break
        gain = 0.0
        for i in range(N):
            if row_groups[bg, i]:
                gain += w[i] * (f_loss[i] - row_loss[bh, i])
        if gain <= 0.0:
            break
        if rounds >= max_rounds:
            raise RuntimeError("Prepend exceeded its round budget")
        risk0 = 0.0
        for i in range(N):
            risk0 += w[i] * f_loss[i]
        for i in range(N):
            if row_groups[bg, i]:
                f_loss[i] = row_loss[bh, i]
        risk1 = 0.0
        for i in range(N):
            risk1 += w[i] * f_loss[i]
        gs[rounds] = bg
        hs[rounds] = bh
        viol[rounds] = best
        before[rounds] = risk0 / total
        after[rounds] = risk1 / total
        rounds += 1
    return gs[:rounds], hs[:rounds], viol[:rounds], before[:rounds], after[:rounds], f_risk, hyp_risk


prepend_loop_numba = _njit(_prepend_loop_py)


def prepend_loop_numpy(row_loss, row_groups, w, counts, eps, h0, max_rounds):
    total = w.sum()
    gmat = row_groups.astype(np.float64)
    f_loss = row_loss[h0].copy()
    hyp_risk = (gmat @ (row_loss * w).T) / counts[:, None]  # (G, H)
    gs, hs, viol, before, after = [], [], [], [], []
    while True:
        f_risk = (gmat @ (w * f_loss)) / counts
        v = f_risk[:, None] - hyp_risk - eps[:, None]
        k = int(np.argmax(v))
        bg, bh = divmod(k, v.shape[1])
        best = v[bg, bh]
        sel = row_groups[bg]
        # progress from per-row differences, exactly 0 when f already agrees with h on g
        gain = float(w[sel] @ (f_loss[sel] - row_loss[bh, sel]))
        if best < 0.0 or gain <= 0.0:
            break
        if len(gs) >= max_rounds:
            raise RuntimeError("Prepend exceeded its round budget")
        risk0 = float(w @ f_loss)
        f_loss[sel] = row_loss[bh, sel]
        gs.append(bg)
        hs.append(bh)
        viol.append(best)
        before.append(risk0 / total)
        after.append(float(w @ f_loss) / total)
    return (
        np.array(gs, dtype=np.int64), np.array(hs, dtype=np.int64), np.array(viol),
        np.array(before), np.array(after), f_risk, hyp_risk,
    )


if USE_NUMBA:
    hedge_run = hedge_run_numba
    snapshot_point_risk = snapshot_point_risk_numba
    prepend_loop = prepend_loop_numba
else:
    hedge_run = hedge_run_numpy
    snapshot_point_risk = snapshot_point_risk_numpy
    prepend_loop = prepend_loop_numpy


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
