"""Tripod Hamiltonians and their analytic adiabatic eigensystems.

Basis order is (|0>, |1>, |e>, |2>) throughout; index ``E`` is the excited
state.  All builders accept a :class:`~tripod.drive.DriveSample` whose
fields may be scalars or arrays; matrices come back with shape
``(..., 4, 4)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drive import DriveSample

__all__ = [
    "G0",
    "G1",
    "E",
    "G2",
    "DegenerateDriveError",
    "AdiabaticFrame",
    "hamiltonian_closed",
    "hamiltonian_nonhermitian",
    "hamiltonian_interaction",
    "eigensystem_closed",
    "eigensystem_open",
    "picture_factor",
]

G0, G1, E, G2 = 0, 1, 2, 3

# Frame order for right/left vectors.
PLUS, MINUS, D1, D2 = 0, 1, 2, 3

# Gamma0 (t - t_i) above this means the parameters make no physical sense
# and exp() factors start to lose precision.
MAX_DECAY_EXPONENT = 50.0


class DegenerateDriveError(ValueError):
    """Raised when all drive amplitudes vanish and the frame is undefined."""


def _couplings(s: DriveSample):
    a0 = np.asarray(s.a0, dtype=float)
    a1 = np.asarray(s.a1, dtype=float)
    a2 = np.asarray(s.a2, dtype=float)
    shape = np.broadcast(a0, a1, a2, s.phi2).shape
    return a0, a1, a2, shape


def hamiltonian_closed(s: DriveSample) -> np.ndarray:
    """Resonant RWA Hamiltonian, (1/2) times the coupling matrix."""
    a0, a1, a2, shape = _couplings(s)
    H = np.zeros(shape + (4, 4), dtype=complex)
    e01 = np.exp(1j * s.phi01)
    e2 = np.exp(1j * np.asarray(s.phi2))
    H[..., G0, E] = 0.5 * a0
    H[..., E, G0] = 0.5 * a0
    H[..., G1, E] = 0.5 * a1 * e01
    H[..., E, G1] = 0.5 * a1 * np.conj(e01)
    H[..., G2, E] = 0.5 * a2 * e2
    H[..., E, G2] = 0.5 * a2 * np.conj(e2)
    return H


def hamiltonian_nonhermitian(s: DriveSample, gamma0: float) -> np.ndarray:
    """No-jump Hamiltonian H - i gamma0 |0><0| for the dephasing channel."""
    if gamma0 < 0:
        raise ValueError("gamma0 must be non-negative")
    H = hamiltonian_closed(s)
    H[..., G0, G0] = -1j * gamma0
    return H


def picture_factor(gamma0: float, t, t_i: float):
    """exp(gamma0 (t - t_i)), guarded against runaway exponents."""
    x = gamma0 * (np.asarray(t, dtype=float) - t_i)
    if np.any(x < -1e-12):
        raise ValueError("interaction picture needs t >= t_i")
    if np.any(x > MAX_DECAY_EXPONENT):
        raise OverflowError(
            f"gamma0 (t - t_i) = {np.max(x):.3g} exceeds {MAX_DECAY_EXPONENT}; "
            "dephasing rate is unphysically large for this sequence"
        )
    return np.exp(x)


def hamiltonian_interaction(s: DriveSample, gamma0: float, t, t_i: float) -> np.ndarray:
    """No-jump Hamiltonian in the interaction picture with respect to -i gamma0 |0><0|.

    The picture removes the diagonal loss term, leaving the A0 couplings
    weighted by exp(+gamma0 (t - t_i)) above and exp(-gamma0 (t - t_i))
    below the diagonal.
    """
    f = picture_factor(gamma0, t, t_i)
    H = hamiltonian_closed(s)
    H[..., G0, E] *= f
    H[..., E, G0] /= f
    return H


@dataclass(frozen=True)
class AdiabaticFrame:
    """Instantaneous eigenvalues with right and left eigenvectors.

    ``right[..., k, :]`` is the k-th right eigenvector and
    ``left[..., k, :]`` the matching covector, so that
    ``left[..., k, :] @ psi`` is the expansion coefficient of ``psi``.
    Ordering of k is (+, -, D1, D2).
    """

    omega_plus: np.ndarray
    omega_minus: np.ndarray
    right: np.ndarray
    left: np.ndarray

    @property
    def omega(self) -> np.ndarray:
        z = np.zeros_like(self.omega_plus)
        return np.stack([self.omega_plus, self.omega_minus, z, z], axis=-1)

    @property
    def omega_dark(self) -> tuple:
        z = np.zeros_like(self.omega_plus)
        return (z, z)

    def project(self, psi: np.ndarray) -> np.ndarray:
        """Coefficients <k_l|psi> in frame order."""
        return np.einsum("...kj,...j->...k", self.left, psi)

    def reconstruct(self, coeffs: np.ndarray) -> np.ndarray:
        return np.einsum("...k,...kj->...j", coeffs, self.right)


def _frame(s: DriveSample, f, allow_degenerate: bool) -> AdiabaticFrame:
    rms = np.asarray(s.rms)
    if not allow_degenerate and np.any(rms == 0):
        raise DegenerateDriveError("all drive amplitudes vanish; the adiabatic frame is undefined")
    th = np.asarray(s.theta_h, dtype=float)
    t01 = np.asarray(s.theta01, dtype=float)
    phi2 = np.asarray(s.phi2, dtype=float)
    shape = np.broadcast(th, t01, phi2, f).shape
    sh, ch = np.sin(th), np.cos(th)
    s01, c01 = np.sin(t01), np.cos(t01)
    e01 = np.exp(1j * s.phi01)
    e2 = np.exp(1j * phi2)
    r = 1.0 / np.sqrt(2.0)

    right = np.zeros(shape + (4, 4), dtype=complex)
    left = np.zeros(shape + (4, 4), dtype=complex)
    for k, sign in ((PLUS, 1.0), (MINUS, -1.0)):
        right[..., k, G0] = r * sh * s01 * f
        right[..., k, G1] = r * sh * c01 * e01
        right[..., k, E] = r * sign
        right[..., k, G2] = r * ch * e2
        left[..., k, G0] = r * sh * s01 / f
        left[..., k, G1] = r * sh * c01 * np.conj(e01)
        left[..., k, E] = r * sign
        left[..., k, G2] = r * ch * np.conj(e2)
    right[..., D1, G0] = -ch * s01 * f
    right[..., D1, G1] = -ch * c01 * e01
    right[..., D1, G2] = sh * e2
    left[..., D1, G0] = -ch * s01 / f
    left[..., D1, G1] = -ch * c01 * np.conj(e01)
    left[..., D1, G2] = sh * np.conj(e2)
    right[..., D2, G0] = c01 * f
    right[..., D2, G1] = -s01 * e01
    left[..., D2, G0] = c01 / f
    left[..., D2, G1] = -s01 * np.conj(e01)

    w = 0.5 * np.broadcast_to(rms, shape)
    return AdiabaticFrame(omega_plus=w.copy(), omega_minus=-w, right=right, left=left)


def eigensystem_closed(s: DriveSample, *, allow_degenerate: bool = False) -> AdiabaticFrame:
    """Closed-form eigenvectors of :func:`hamiltonian_closed`.

    With ``allow_degenerate`` the vectors are built from the held mixing
    angles even where the drive vanishes (all eigenvalues zero there).
    """
    return _frame(s, 1.0, allow_degenerate)


def eigensystem_open(
    s: DriveSample, gamma0: float, t, t_i: float, *, allow_degenerate: bool = False
) -> AdiabaticFrame:
    """Biorthonormal right/left eigenvectors of :func:`hamiltonian_interaction`.

    The |0> components of right vectors carry exp(+gamma0 (t - t_i)) and
    those of left vectors exp(-gamma0 (t - t_i)); the spectrum is the
    closed one.
    """
    return _frame(s, picture_factor(gamma0, t, t_i), allow_degenerate)
