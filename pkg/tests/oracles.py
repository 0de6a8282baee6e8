"""Brute-force references built directly from the defining sums, with no structure exploited."""

import numpy as np


def r_free_running(sigma2, d):
    return np.exp(-0.5 * sigma2 * np.abs(d))


def r_pll(scale, c_ts, comps, d):
    """``comps`` are ``(weight, lam_ts)`` pairs; ``scale = 4 pi^2 f_c^2``."""
    d = np.abs(d)
    var = c_ts * d + 2 * sum(w * (1 - np.exp(-lt * d)) for w, lt in comps)
    return np.exp(-0.5 * scale * var)


def r_of(model):
    ts = model.sample_interval_s
    comps = [(c.weight, c.lam * ts) for c in model.pll_components]
    return lambda d: r_pll(model.phase_scale, model.c_param * ts, comps, d)


def freq_corr(r, n):
    """``R(p, q) = N^-2 sum_m sum_n r(m - n) exp(-j 2 pi (p m - q n) / N)`` by explicit loops."""
    out = np.zeros((n, n), dtype=complex)
    m_idx = np.arange(n)
    for p in range(n):
        for q in range(n):
            acc = 0j
            for m in m_idx:
                acc += np.sum(r(m - m_idx) * np.exp(-2j * np.pi * (p * m - q * m_idx) / n))
            out[p, q] = acc / n**2
    return out


def offsets(order):
    half = order // 2
    return list(range(half, 0, -1)) + [-k for k in range(1, half + 1)]


def mmse_freq(b, a_ref, r_full, rows, order, soi, sigma2):
    """``W = R A^H (A R A^H + R_eta)^-1`` assembled element by element, then placed into a length-N spectrum."""
    n = len(b)
    offs = offsets(order)
    a_mat = np.array([[a_ref[(l - q) % n] for q in offs] for l in rows])
    r = np.array([[r_full[p % n, q % n] for q in offs] for p in offs])
    resid = sum(r_full[k, k].real for k in range(n) if k != 0 and k not in [o % n for o in offs])
    r_eta = (soi + resid * np.mean(np.abs(a_ref) ** 2) + sigma2) * np.eye(len(rows))
    w = r @ a_mat.conj().T @ np.linalg.inv(a_mat @ r @ a_mat.conj().T + r_eta)
    est = w @ np.asarray(b)[list(rows)]
    out = np.zeros(n, dtype=complex)
    for q, v in zip(offs, est):
        out[q % n] = v
    return out


def mmse_time(y, a, r, positions, noise):
    """``w = R a^H (a R a^H + R_zeta)^-1`` with a general inverse, then linear interpolation with held ends."""
    pos = np.asarray(positions)
    rm = r(pos[:, None] - pos[None, :])
    a_d = np.diag(a[pos])
    w = rm @ a_d.conj().T @ np.linalg.inv(a_d @ rm @ a_d.conj().T + noise * np.eye(len(pos)))
    est = w @ y[pos]
    n = len(y)
    out = np.empty(n, dtype=complex)
    for k in range(n):
        if k <= pos[0]:
            out[k] = est[0]
        elif k >= pos[-1]:
            out[k] = est[-1]
        else:
            i = np.searchsorted(pos, k, side="right") - 1
            t = (k - pos[i]) / (pos[i + 1] - pos[i])
            out[k] = (1 - t) * est[i] + t * est[i + 1]
    return out
