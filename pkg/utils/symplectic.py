"""Symplectic linear algebra in the block order (x1, x2, p1, p2).

Convention: J = [[0, I], [−I, 0]], the Hamiltonian field is X = J·∇H and the
symplectic form is ω(ξ, ζ) = ⟨Jξ, ζ⟩, so that ω(∇H, X) = ‖∇H‖².
"""

import numpy as np

J4 = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])
J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])

# Frame columns are ordered (u1, u2, u1s, u2s); the transverse block sits on
# indices 1 and 3.
TRANSVERSE = (1, 3)
LEVEL_RESTRICTED = (0, 1, 3)


def omega(xi: np.ndarray, zeta: np.ndarray) -> float:
    return float(np.dot(J4 @ np.asarray(xi), np.asarray(zeta)))


def gram_matrix(vectors: np.ndarray) -> np.ndarray:
    """ω-Gram matrix of the columns of ``vectors``."""
    vectors = np.asarray(vectors, dtype=float)
    return vectors.T @ J4.T @ vectors


def symplectic_defect(matrix: np.ndarray) -> float:
    """‖MᵀJM − J‖_∞ (max-entry norm)."""
    matrix = np.asarray(matrix, dtype=float)
    size = matrix.shape[0]
    j = J4 if size == 4 else J2
    return float(np.max(np.abs(matrix.T @ j @ matrix - j)))


def frame_expansion(frame_matrix: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Express ``matrix`` in the basis given by the columns of ``frame_matrix``."""
    return np.linalg.solve(frame_matrix, matrix @ frame_matrix)


def project_pi(expanded: np.ndarray) -> np.ndarray:
    """Transverse Sp(1) block of a matrix already expanded in a frame."""
    return np.asarray(expanded)[np.ix_(TRANSVERSE, TRANSVERSE)]


def sp_hat_defect(expanded: np.ndarray) -> float:
    """Distance of a frame-expanded monodromy from the Ŝp(2) block form.

    Ŝp(2) fixes the flow direction (first column e1) and the energy
    covector (third row e3ᵀ).
    """
    expanded = np.asarray(expanded, dtype=float)
    e1 = np.eye(4)[:, 0]
    e3 = np.eye(4)[2]
    return float(
        max(np.max(np.abs(expanded[:, 0] - e1)), np.max(np.abs(expanded[2] - e3)))
    )


def multiplicity_of_one(level_block: np.ndarray, tol: float) -> int:
    """Algebraic multiplicity of the eigenvalue 1 of a level-restricted block.

    ``level_block`` is the 3×3 restriction (u1, u2, u2s) of a frame-expanded
    flow differential; its eigenvalues within ``tol`` of 1 are counted. A
    Jordan block at 1 splits by about the square root of the rounding, so the
    radius never drops below that.
    """
    level_block = np.asarray(level_block, dtype=float)
    rounding = 1024.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(level_block))))
    radius = max(tol, float(np.sqrt(rounding)))
    eigenvalues = np.linalg.eigvals(level_block)
    return int(np.sum(np.abs(eigenvalues - 1.0) <= radius))
