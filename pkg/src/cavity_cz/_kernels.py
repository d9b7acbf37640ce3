"""Compiled fixed-step integrators for ``DrivenHamiltonian`` sources.

The Hamiltonian is flattened into COO triplets tagged with a term index;
each term carries an amplitude, a phase rate and a flag saying whether its
Hermitian conjugate is added. Evaluating ``H(t) psi`` is then a single pass
over the nonzeros, which keeps 1e5-1e6 step runs at desk scale.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .qalgebra import HBAR


def flatten(ham):
    """COO representation ``(rows, cols, vals, term, amps, omegas, hc)``."""
    rows, cols, vals, term = [], [], [], []
    amps, omegas, hc = [], [], []

    def add(op, amp, omega, herm_conj):
        r, c = np.nonzero(op)
        k = len(amps)
        rows.append(r)
        cols.append(c)
        vals.append(op[r, c])
        term.append(np.full(r.size, k))
        amps.append(amp)
        omegas.append(omega)
        hc.append(herm_conj)

    add(ham.static, 1.0, 0.0, False)
    for amp, omega, op in ham.terms:
        add(op, amp, omega / HBAR, True)
    return (
        np.concatenate(rows).astype(np.int64),
        np.concatenate(cols).astype(np.int64),
        np.concatenate(vals).astype(np.complex128),
        np.concatenate(term).astype(np.int64),
        np.array(amps, dtype=np.complex128),
        np.array(omegas, dtype=np.float64),
        np.array(hc, dtype=np.bool_),
    )


@njit(cache=True, nogil=True)
def _apply(t, psi, out, rows, cols, vals, term, amps, omegas, hc, f):
    # out = -i/hbar H(t) psi
    for k in range(amps.size):
        f[k] = amps[k] * np.exp(1j * omegas[k] * t)
    out[:] = 0.0
    for e in range(rows.size):
        k = term[e]
        x = f[k] * vals[e]
        out[rows[e]] += x * psi[cols[e]]
        if hc[k]:
            out[cols[e]] += np.conj(x) * psi[rows[e]]
    scale = -1j / HBAR
    for i in range(out.size):
        out[i] *= scale


@njit(cache=True, nogil=True)
def rk4_run(psi0, t0, dt, n_steps, sample_every, rows, cols, vals, term, amps, omegas, hc):
    n = psi0.size
    n_samples = n_steps // sample_every + 1
    if n_steps % sample_every != 0:
        n_samples += 1
    out = np.empty((n_samples, n), dtype=np.complex128)
    psi = psi0.copy()
    k1 = np.empty(n, dtype=np.complex128)
    k2 = np.empty(n, dtype=np.complex128)
    k3 = np.empty(n, dtype=np.complex128)
    k4 = np.empty(n, dtype=np.complex128)
    tmp = np.empty(n, dtype=np.complex128)
    f = np.empty(amps.size, dtype=np.complex128)
    out[0] = psi
    s = 1
    for step in range(n_steps):
        t = t0 + step * dt
        _apply(t, psi, k1, rows, cols, vals, term, amps, omegas, hc, f)
        for i in range(n):
            tmp[i] = psi[i] + 0.5 * dt * k1[i]
        _apply(t + 0.5 * dt, tmp, k2, rows, cols, vals, term, amps, omegas, hc, f)
        for i in range(n):
            tmp[i] = psi[i] + 0.5 * dt * k2[i]
        _apply(t + 0.5 * dt, tmp, k3, rows, cols, vals, term, amps, omegas, hc, f)
        for i in range(n):
            tmp[i] = psi[i] + dt * k3[i]
        _apply(t + dt, tmp, k4, rows, cols, vals, term, amps, omegas, hc, f)
        for i in range(n):
            psi[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if (step + 1) % sample_every == 0 or step + 1 == n_steps:
            out[s] = psi
            s += 1
    return out


@njit(cache=True, nogil=True)
def magnus2_run(psi0, t0, dt, n_steps, sample_every, rows, cols, vals, term, amps, omegas, hc):
    """Exponential midpoint rule; the exponential action is summed as a
    Taylor series until the next term drops below 1e-16."""
    n = psi0.size
    n_samples = n_steps // sample_every + 1
    if n_steps % sample_every != 0:
        n_samples += 1
    out = np.empty((n_samples, n), dtype=np.complex128)
    psi = psi0.copy()
    term_v = np.empty(n, dtype=np.complex128)
    nxt = np.empty(n, dtype=np.complex128)
    acc = np.empty(n, dtype=np.complex128)
    f = np.empty(amps.size, dtype=np.complex128)
    out[0] = psi
    s = 1
    for step in range(n_steps):
        tm = t0 + (step + 0.5) * dt
        acc[:] = psi
        term_v[:] = psi
        for m in range(1, 60):
            _apply(tm, term_v, nxt, rows, cols, vals, term, amps, omegas, hc, f)
            size = 0.0
            for i in range(n):
                term_v[i] = nxt[i] * dt / m
                acc[i] += term_v[i]
                size = max(size, abs(term_v[i]))
            if size < 1e-16:
                break
        psi[:] = acc
        if (step + 1) % sample_every == 0 or step + 1 == n_steps:
            out[s] = psi
            s += 1
    return out
