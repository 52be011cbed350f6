"""Moment matrices and the moment parameterization of the cascade operators.

The k-th moment matrix of the plant at a point s0 outside eig(A) is

    M_0(s0) = C (s0 I - A)^-1 B + D          (frequency response sample)
    M_k(s0) = C (s0 I - A)^-(k+1) B,  k >= 1

i.e. (-1)^k / k! times the k-th derivative of the transfer matrix.  With a
Jordan decomposition F = V J V^-1 grouped by distinct eigenvalues, the
matrices X_{k,j} = V_k N_k^j W_k* turn moment data into the cascade
operators:

    cp(H) = sum_k sum_j (-1)^j M_j(lam_k) H X_{k,j}
    cd(G) = sum_k sum_j (-1)^j X_{k,j} G M_j(lam_k)

This gives a second, Sylvester-free route to the operators; both routes are
cross-checked in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DefectiveUndeclared,
    DimensionMismatch,
    IllConditioned,
    PoleAtPoint,
)
from .linsolve import as_matrix, check_spectral_gap
from .systems import Plant

__all__ = [
    "moment_matrix",
    "MomentSet",
    "moment_set",
    "JordanBlockSpec",
    "JordanBlock",
    "JordanStructure",
    "jordan_structure",
    "cp_from_moments",
    "cd_from_moments",
    "SymmetryReport",
    "symmetry_check",
]

#: Eigenvalues closer than this (relative to 1 + spectral radius) are
#: grouped into one distinct-eigenvalue block.
GROUPING_RTOL = 1e-7

#: Eigenvector matrices with condition number above this are treated as
#: numerically defective.
DIAGONALIZABLE_COND = 1e8


def moment_matrix(plant: Plant, s0: complex, k: int = 0) -> np.ndarray:
    """k-th moment matrix of the plant at s0; requires s0 outside eig(A).

    Computed by repeated linear solves against (s0 I - A), never by forming
    inverse powers explicitly.
    """
    if k < 0:
        raise ValueError("order k must be nonnegative")
    eigs = np.linalg.eigvals(plant.A)
    radius = np.abs(eigs).max(initial=0.0)
    if np.abs(eigs - s0).min() <= 1e-8 * (1.0 + max(radius, abs(s0))):
        raise PoleAtPoint(f"s0 = {s0} is (nearly) an eigenvalue of A")
    shifted = s0 * np.eye(plant.n) - plant.A.astype(complex)
    x = np.linalg.solve(shifted, plant.B.astype(complex))
    for _ in range(k):
        x = np.linalg.solve(shifted, x)
    m = plant.C @ x
    if k == 0:
        m = m + plant.D
    return m


@dataclass(frozen=True)
class MomentSet:
    """Moment matrices of a plant at a set of points with multiplicities.

    ``matrices[k][j]`` is M_j at the k-th point, for j up to the point's
    multiplicity minus one.
    """

    points: tuple
    matrices: tuple

    def total_multiplicity(self) -> int:
        return sum(m for _, m in self.points)


def moment_set(plant: Plant, points) -> MomentSet:
    """Collect M_0 .. M_{mult-1} at each (point, multiplicity) pair."""
    pts = []
    mats = []
    for lam, mult in points:
        pts.append((complex(lam), int(mult)))
        mats.append(
            tuple(moment_matrix(plant, lam, j) for j in range(int(mult)))
        )
    return MomentSet(tuple(pts), tuple(mats))


@dataclass(frozen=True)
class JordanBlockSpec:
    """Declared block structure for one eigenvalue of F.

    ``sizes`` lists the Jordan block sizes for this eigenvalue; their sum is
    the algebraic multiplicity.  Conjugate eigenvalues of a real matrix must
    be declared separately.
    """

    eigenvalue: complex
    sizes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "eigenvalue", complex(self.eigenvalue))
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ValueError("block sizes must be positive")
        object.__setattr__(self, "sizes", sizes)

    @property
    def multiplicity(self) -> int:
        return sum(self.sizes)


@dataclass(frozen=True)
class JordanBlock:
    """Grouped data for one distinct eigenvalue: F V = V (lam I + N)."""

    eigenvalue: complex
    multiplicity: int
    v: np.ndarray  # nu x m_k, generalized eigenvector chains
    w: np.ndarray  # nu x m_k, matching rows of V^-1 (conjugated)
    n: np.ndarray  # m_k x m_k nilpotent part

    def x_matrix(self, j: int) -> np.ndarray:
        """X_{k,j} = V_k N_k^j W_k*."""
        return self.v @ np.linalg.matrix_power(self.n, j) @ self.w.conj().T


@dataclass(frozen=True)
class JordanStructure:
    """Distinct-eigenvalue Jordan data of F with the X matrices assembled."""

    f: np.ndarray
    blocks: tuple[JordanBlock, ...]

    @property
    def nu(self) -> int:
        return self.f.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.array([b.eigenvalue for b in self.blocks])

    def resolution_defect(self) -> float:
        """Deviation of sum_k X_{k,0} from the identity."""
        acc = sum(b.x_matrix(0) for b in self.blocks)
        return float(np.max(np.abs(acc - np.eye(self.nu))))


def _verify_structure(f: np.ndarray, blocks, rtol: float = 1e-8) -> None:
    nu = f.shape[0]
    scale = 1.0 + np.abs(f).max(initial=0.0)
    total = 0
    acc = np.zeros((nu, nu), dtype=complex)
    for blk in blocks:
        total += blk.multiplicity
        defect = np.abs(
            f @ blk.v - blk.v @ (blk.eigenvalue * np.eye(blk.multiplicity) + blk.n)
        ).max(initial=0.0)
        if defect > 1e-7 * scale:
            raise IllConditioned(
                f"chain verification failed at eigenvalue {blk.eigenvalue:.4g} "
                f"(defect {defect:.3e})"
            )
        acc += blk.x_matrix(0)
    if total != nu:
        raise DimensionMismatch(
            f"declared multiplicities sum to {total}, expected {nu}"
        )
    if np.abs(acc - np.eye(nu)).max() > 1e-8 * scale:
        raise IllConditioned("spectral projectors do not resolve the identity")


def _semisimple_structure(f: np.ndarray, grouping_tol: float) -> JordanStructure:
    vals, vecs = np.linalg.eig(f)
    cond = np.linalg.cond(vecs)
    if cond > DIAGONALIZABLE_COND:
        raise DefectiveUndeclared(
            f"F appears defective (eigenvector condition number {cond:.2e}); "
            "declare its block structure"
        )
    try:
        vinv = np.linalg.inv(vecs)
    except np.linalg.LinAlgError as exc:
        raise DefectiveUndeclared("eigenvector matrix is singular") from exc
    # group eigenvalues within the tolerance
    remaining = list(range(len(vals)))
    blocks = []
    while remaining:
        idx = remaining.pop(0)
        group = [idx]
        group_val = vals[idx]
        keep = []
        for other in remaining:
            if abs(vals[other] - group_val) <= grouping_tol:
                group.append(other)
            else:
                keep.append(other)
        remaining = keep
        cols = np.array(group)
        lam = complex(vals[cols].mean())
        mult = len(group)
        blocks.append(
            JordanBlock(
                lam,
                mult,
                vecs[:, cols],
                vinv[cols, :].conj().T,
                np.zeros((mult, mult)),
            )
        )
    structure = JordanStructure(f, tuple(blocks))
    _verify_structure(f, structure.blocks)
    return structure


def _nullspace(m: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    u, s, vh = np.linalg.svd(m)
    tol = max(m.shape) * np.finfo(float).eps * (s[0] if s.size else 1.0)
    tol = max(tol, rtol * (s[0] if s.size else 1.0))
    rank = int(np.count_nonzero(s > tol))
    return vh[rank:].conj().T


def _declared_structure(f: np.ndarray, declared) -> JordanStructure:
    nu = f.shape[0]
    blocks = []
    for spec in declared:
        lam = spec.eigenvalue
        shifted = f.astype(complex) - lam * np.eye(nu)
        max_size = max(spec.sizes)
        kernels = [np.zeros((nu, 0))]
        power = np.eye(nu, dtype=complex)
        for _ in range(max_size):
            power = power @ shifted
            kernels.append(_nullspace(power))
        # build chains from tallest blocks down
        chains: list[list[np.ndarray]] = []
        used_tops: list[np.ndarray] = []
        for size in sorted(spec.sizes, reverse=True):
            basis = kernels[size]
            # exclude directions already reachable: lower kernel + existing
            # chain members of this height
            exclude = [kernels[size - 1]]
            for chain in chains:
                if len(chain) >= size:
                    exclude.append(chain[size - 1][:, None])
            excl = np.hstack([e for e in exclude if e.size] or [np.zeros((nu, 0))])
            if excl.size:
                q, _ = np.linalg.qr(excl)
                proj = basis - q @ (q.conj().T @ basis)
            else:
                proj = basis
            # pick the strongest remaining direction as the chain top
            u, s, _ = np.linalg.svd(proj, full_matrices=False)
            if s.size == 0 or s[0] < 1e-8:
                raise IllConditioned(
                    f"cannot extract a height-{size} chain at eigenvalue "
                    f"{lam:.4g}; declared structure may be wrong"
                )
            top = u[:, 0]
            chain = [top]
            for _ in range(size - 1):
                chain.append(shifted @ chain[-1])
            chain.reverse()  # chain[0] is the eigenvector
            chains.append(chain)
            used_tops.append(top)
        v_cols = []
        n_mat = np.zeros((spec.multiplicity, spec.multiplicity))
        offset = 0
        for chain in chains:
            size = len(chain)
            for vec in chain:
                v_cols.append(vec)
            for j in range(size - 1):
                n_mat[offset + j, offset + j + 1] = 1.0
            offset += size
        blocks.append((lam, spec.multiplicity, np.column_stack(v_cols), n_mat))

    v_full = np.hstack([b[2] for b in blocks])
    if v_full.shape != (nu, nu):
        raise DimensionMismatch(
            f"declared structure covers {v_full.shape[1]} of {nu} dimensions"
        )
    try:
        vinv = np.linalg.inv(v_full)
    except np.linalg.LinAlgError as exc:
        raise IllConditioned("declared chains are linearly dependent") from exc
    jordan_blocks = []
    col = 0
    for lam, mult, v_k, n_mat in blocks:
        w_k = vinv[col : col + mult, :].conj().T
        jordan_blocks.append(JordanBlock(lam, mult, v_k, w_k, n_mat))
        col += mult
    structure = JordanStructure(f, tuple(jordan_blocks))
    _verify_structure(f, structure.blocks)
    return structure


def jordan_structure(
    f, declared=None, grouping_tol: float | None = None
) -> JordanStructure:
    """Distinct-eigenvalue Jordan data of F.

    Without a declaration F must be numerically diagonalizable: eigenvalues
    are grouped within ``GROUPING_RTOL * (1 + spectral radius)`` and all
    nilpotent parts are zero.  Genuinely defective structure is numerically
    fragile to detect, so it must be declared explicitly as a sequence of
    :class:`JordanBlockSpec`; the generalized eigenvector chains are then
    computed from kernel staircases and verified.
    """
    f = as_matrix(f, "F")
    if f.shape[0] != f.shape[1]:
        raise DimensionMismatch(f"F must be square, got {f.shape}")
    if declared is not None:
        return _declared_structure(f, list(declared))
    if grouping_tol is None:
        radius = np.abs(np.linalg.eigvals(f)).max(initial=0.0)
        grouping_tol = GROUPING_RTOL * (1.0 + radius)
    return _semisimple_structure(f, grouping_tol)


def _strip_imag(value: np.ndarray, inputs_real: bool) -> np.ndarray:
    if not inputs_real:
        return value
    scale = max(1.0, np.abs(value).max(initial=0.0))
    if np.abs(value.imag).max(initial=0.0) > 1e-9 * scale:
        raise IllConditioned(
            "moment-route value has a non-negligible imaginary part"
        )
    return np.ascontiguousarray(value.real)


def cp_from_moments(plant: Plant, structure: JordanStructure, h) -> np.ndarray:
    """Moment-parameterized evaluation of the primal operator cp(H)."""
    h = as_matrix(h, "H")
    nu = structure.nu
    if h.shape != (plant.m, nu):
        raise DimensionMismatch(f"H must be {(plant.m, nu)}, got {h.shape}")
    check_spectral_gap(plant.A, structure.f)
    inputs_real = not (
        np.iscomplexobj(h) or np.iscomplexobj(plant.A) or np.iscomplexobj(structure.f)
    )
    value = np.zeros((plant.p, nu), dtype=complex)
    for blk in structure.blocks:
        for j in range(blk.multiplicity):
            x_kj = blk.x_matrix(j)
            if not np.any(x_kj):
                continue
            m_j = moment_matrix(plant, blk.eigenvalue, j)
            value += (-1) ** j * m_j @ h @ x_kj
    return _strip_imag(value, inputs_real)


def cd_from_moments(plant: Plant, structure: JordanStructure, g) -> np.ndarray:
    """Moment-parameterized evaluation of the dual operator cd(G)."""
    g = as_matrix(g, "G")
    nu = structure.nu
    if g.shape != (nu, plant.p):
        raise DimensionMismatch(f"G must be {(nu, plant.p)}, got {g.shape}")
    check_spectral_gap(plant.A, structure.f)
    inputs_real = not (
        np.iscomplexobj(g) or np.iscomplexobj(plant.A) or np.iscomplexobj(structure.f)
    )
    value = np.zeros((nu, plant.m), dtype=complex)
    for blk in structure.blocks:
        for j in range(blk.multiplicity):
            x_kj = blk.x_matrix(j)
            if not np.any(x_kj):
                continue
            m_j = moment_matrix(plant, blk.eigenvalue, j)
            value += (-1) ** j * x_kj @ g @ m_j
    return _strip_imag(value, inputs_real)


@dataclass(frozen=True)
class SymmetryReport:
    """Outcome of the commutation-based symmetry checks.

    ``commutation_holds``: every X_{k,j} commutes with G M_j(lam_k) H.
    ``product_identity_holds``: G cp(H) equals cd(G) H.
    ``transpose_identity_holds``: G cp(H) equals (cd(G) H)^T; only
    meaningful under the structured choice F symmetric, G with identical
    columns, H = G^T (``structured_case`` records whether that held).
    """

    commutation_holds: bool
    product_identity_holds: bool
    transpose_identity_holds: bool
    structured_case: bool
    max_commutator: float
    max_product_defect: float
    max_transpose_defect: float


def symmetry_check(
    plant: Plant, structure: JordanStructure, g, h, rtol: float = 1e-8
) -> SymmetryReport:
    """Check the symmetry identities tying G cp(H) to cd(G) H."""
    g = as_matrix(g, "G")
    h = as_matrix(h, "H")
    gcp = g @ cp_from_moments(plant, structure, h)
    cdh = cd_from_moments(plant, structure, g) @ h
    scale = max(1.0, np.abs(gcp).max(initial=0.0), np.abs(cdh).max(initial=0.0))

    max_comm = 0.0
    for blk in structure.blocks:
        for j in range(blk.multiplicity):
            x_kj = blk.x_matrix(j)
            m_j = moment_matrix(plant, blk.eigenvalue, j)
            prod = g @ m_j @ h
            comm = np.abs(x_kj @ prod - prod @ x_kj).max(initial=0.0)
            max_comm = max(max_comm, float(comm))
    comm_scale = max(1.0, np.abs(g).max() * np.abs(h).max())
    commutes = max_comm <= rtol * comm_scale

    prod_defect = float(np.abs(gcp - cdh).max(initial=0.0))
    transp_defect = float(np.abs(gcp - cdh.T).max(initial=0.0))

    f = structure.f
    structured = (
        not np.iscomplexobj(f)
        and np.abs(f - f.T).max(initial=0.0) <= 1e-12
        and g.shape[1] >= 1
        and np.abs(g - g[:, :1]).max(initial=0.0) <= 1e-12
        and h.shape == g.T.shape
        and np.abs(h - g.T).max(initial=0.0) <= 1e-12
    )
    return SymmetryReport(
        commutation_holds=commutes,
        product_identity_holds=prod_defect <= rtol * scale,
        transpose_identity_holds=transp_defect <= rtol * scale,
        structured_case=structured,
        max_commutator=max_comm,
        max_product_defect=prod_defect,
        max_transpose_defect=transp_defect,
    )
