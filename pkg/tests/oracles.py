"""Independent reference computations used to check the package.

Nothing here imports hhlsim: every oracle is rebuilt from Kronecker products,
scipy.linalg.expm or textbook formulas.
"""
from functools import reduce

import numpy as np
from scipy.linalg import expm

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)


def kron(*ops):
    return reduce(np.kron, ops, np.ones((1, 1)))


def embed_bruteforce(op, dims, targets):
    """Full matrix of ``op`` on ``targets`` by summing over basis matrix elements."""
    n = len(dims)
    total = int(np.prod(dims))
    tdims = [dims[t] for t in targets]
    out = np.zeros((total, total), dtype=complex)
    for col in range(total):
        src = np.unravel_index(col, dims)
        sub_in = np.ravel_multi_index([src[t] for t in targets], tdims)
        for sub_out in range(int(np.prod(tdims))):
            amp = op[sub_out, sub_in]
            if amp == 0:
                continue
            dst = list(src)
            for t, lv in zip(targets, np.unravel_index(sub_out, tdims)):
                dst[t] = lv
            out[np.ravel_multi_index(dst, dims), col] += amp
    return out


def ry(theta):
    return expm(-0.5j * theta * Y)


def rx(theta):
    return expm(-0.5j * theta * X)


def rz(theta):
    return expm(-0.5j * theta * Z)


def random_unitary(d, rng):
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def haar_state(d, rng):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def exchange_propagator(g_ghz, t_ns):
    """exp(-i 2pi g t (s+s- + s-s+)) for two resonant qubits, computed by expm."""
    sp = np.array([[0, 0], [1, 0]], dtype=complex)  # |1><0|
    sm = sp.T
    h = 2 * np.pi * g_ghz * (np.kron(sp, sm) + np.kron(sm, sp))
    return expm(-1j * h * t_ns)


def qutrit_pair_hamiltonian(detuning_ghz, g_ghz, eta_ghz):
    """Control/target qutrits in the target's frame; control offset by ``detuning``."""
    a = np.diag(np.sqrt([1.0, 2.0]), 1)
    i3 = np.eye(3)
    ac, at = np.kron(a, i3), np.kron(i3, a)
    nc, nt = ac.T @ ac, at.T @ at
    h = detuning_ghz * nc - eta_ghz / 2 * (nc @ (nc - np.eye(9))) - eta_ghz / 2 * (nt @ (nt - np.eye(9)))
    h = h + g_ghz * (ac.T @ at + at.T @ ac)
    return 2 * np.pi * h


def conditional_phase(u4):
    d = np.angle(u4[3, 3]) - np.angle(u4[2, 2]) - np.angle(u4[1, 1]) + np.angle(u4[0, 0])
    return (d + np.pi) % (2 * np.pi) - np.pi


def ramsey_probability(theta, phase):
    return 0.5 * (1 + np.cos(theta + phase))


def hhl_memory(A, b, C=1.0):
    """Unnormalized postselected memory C A^-1 b."""
    return C * np.linalg.solve(np.asarray(A, dtype=complex), np.asarray(b, dtype=complex))


def pauli_coefficients(op):
    return np.array([np.trace(p.conj().T @ op) / 2 for p in (I2, X, Y, Z)])


def chi_of_kraus(kraus):
    """chi in the {I,X,Y,Z} basis of the map rho -> sum K rho K^dag."""
    chi = np.zeros((4, 4), dtype=complex)
    for k in kraus:
        v = pauli_coefficients(k)
        chi += np.outer(v, v.conj())
    return chi


def psd_projection_cvx(m, trace):
    import cvxpy as cp

    d = m.shape[0]
    x = cp.Variable((d, d), hermitian=True)
    prob = cp.Problem(cp.Minimize(cp.norm(x - m, "fro")), [x >> 0, cp.real(cp.trace(x)) == trace])
    prob.solve()
    return x.value


def bloch_states_18():
    ring = [k * np.pi / 4 for k in range(8)]
    pts = [(0.0, 0.0)] + [(np.pi / 3, p) for p in ring] + [(2 * np.pi / 3, p) for p in ring] + [(np.pi, 0.0)]
    return [np.array([np.cos(t / 2), np.exp(1j * p) * np.sin(t / 2)]) for t, p in pts]
