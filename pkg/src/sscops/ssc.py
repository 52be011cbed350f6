"""Steady-state cascade operators and their test batteries.

For a plant (A, B, C, D) and driver dynamics F with disjoint spectra, the
two Sylvester solutions

    Pi F - A Pi = B H        (primal, driver feeds plant)
    M A - F M   = G C        (dual, plant feeds driver)

induce the linear steady-state cascade operators

    cp(H) = C Pi + D H       (steady-state observation map)
    cd(G) = -M B + G D       (steady-state actuation map)

This module computes them, builds their vectorized matrix representations,
decides surjectivity/injectivity, solves the associated regulator-type
equation systems, and runs the equivalence batteries tying all of those to
rank conditions on the Rosenbrock matrix at the eigenvalues of F.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, Unsolvable
from .linsolve import (
    AXIS_BAND,
    SylvesterOperator,
    as_matrix,
    check_spectral_gap,
    numerical_rank,
)
from .systems import PbhResult, Plant, pbh, rosenbrock

__all__ = [
    "SscSolution",
    "ssc_primal",
    "ssc_dual",
    "SscFactory",
    "OperatorMatrix",
    "operator_matrix",
    "solve_operator_equation",
    "TestReport",
    "RankWitness",
    "TransferVerdict",
    "right_invertibility_report",
    "left_invertibility_report",
    "invertibility_ok",
    "solve_francis",
    "solve_dual_francis",
    "HautusReport",
    "hautus_check",
]


def _vec(m: np.ndarray) -> np.ndarray:
    return np.asarray(m).reshape(-1, order="F")


def _unvec(v: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    return np.asarray(v).reshape(shape, order="F")


@dataclass(frozen=True)
class SscSolution:
    """A Sylvester solution paired with the operator value it induces.

    ``which == "primal"``: ``sylvester`` is Pi (n x nu) and ``value`` is
    cp(H) = C Pi + D H (p x nu).  ``which == "dual"``: ``sylvester`` is
    M (nu x n) and ``value`` is cd(G) = -M B + G D (nu x m).
    ``residual`` is the relative residual of the Sylvester equation.
    """

    which: str
    sylvester: np.ndarray
    value: np.ndarray
    residual: float


class SscFactory:
    """Factored operator evaluations for a fixed (plant, F) pair.

    Schur decompositions of A and F are reused across calls, which matters
    when probing all unit-coordinate arguments to build operator matrices.
    """

    def __init__(self, plant: Plant, f):
        self.plant = plant
        self.f = as_matrix(f, "F")
        check_spectral_gap(plant.A, self.f)
        self._primal_op = None
        self._dual_op = None

    @property
    def nu(self) -> int:
        return self.f.shape[0]

    def primal(self, h) -> SscSolution:
        """Solve Pi F - A Pi = B H and return (Pi, cp(H))."""
        h = as_matrix(h, "H")
        plant = self.plant
        if h.shape != (plant.m, self.nu):
            raise ShapeMismatch(
                f"H must be {(plant.m, self.nu)}, got {h.shape}"
            )
        if self._primal_op is None:
            self._primal_op = SylvesterOperator(plant.A, self.f)
        # Pi F - A Pi = B H  <=>  A Pi - Pi F = -B H
        pi = self._primal_op.solve(-plant.B @ h)
        residual = self._primal_op.residual(pi, -plant.B @ h)
        value = plant.C @ pi + plant.D @ h
        return SscSolution("primal", pi, value, residual)

    def dual(self, g) -> SscSolution:
        """Solve M A - F M = G C and return (M, cd(G))."""
        g = as_matrix(g, "G")
        plant = self.plant
        if g.shape != (self.nu, plant.p):
            raise ShapeMismatch(
                f"G must be {(self.nu, plant.p)}, got {g.shape}"
            )
        if self._dual_op is None:
            self._dual_op = SylvesterOperator(self.f, plant.A)
        # M A - F M = G C  <=>  F M - M A = -G C
        m = self._dual_op.solve(-g @ plant.C)
        residual = self._dual_op.residual(m, -g @ plant.C)
        value = -m @ plant.B + g @ plant.D
        return SscSolution("dual", m, value, residual)


def ssc_primal(plant: Plant, f, h) -> SscSolution:
    """Steady-state observation data of the driver-feeds-plant cascade."""
    return SscFactory(plant, f).primal(h)


def ssc_dual(plant: Plant, f, g) -> SscSolution:
    """Steady-state actuation data of the plant-feeds-driver cascade."""
    return SscFactory(plant, f).dual(g)


@dataclass(frozen=True)
class OperatorMatrix:
    """Vectorized matrix of cp or cd acting on column-stacked arguments.

    For the primal operator the matrix maps vec(H) (length m*nu) to
    vec(cp(H)) (length p*nu); for the dual it maps vec(G) (length nu*p) to
    vec(cd(G)) (length nu*m).  Column-major (Fortran) stacking throughout.
    """

    which: str
    matrix: np.ndarray
    singular_values: np.ndarray
    rank: int
    domain_shape: tuple[int, int]
    codomain_shape: tuple[int, int]

    def apply(self, arg) -> np.ndarray:
        arg = as_matrix(arg, "argument")
        if arg.shape != self.domain_shape:
            raise ShapeMismatch(
                f"argument must be {self.domain_shape}, got {arg.shape}"
            )
        return _unvec(self.matrix @ _vec(arg), self.codomain_shape)

    @property
    def is_surjective(self) -> bool:
        return self.rank == self.matrix.shape[0]

    @property
    def is_injective(self) -> bool:
        return self.rank == self.matrix.shape[1]


def operator_matrix(plant: Plant, f, which: str) -> OperatorMatrix:
    """Build the vectorized operator matrix by probing unit arguments."""
    fac = SscFactory(plant, f)
    nu = fac.nu
    if which == "primal":
        dom = (plant.m, nu)
        codom = (plant.p, nu)
        evaluate = lambda arg: fac.primal(arg).value  # noqa: E731
    elif which == "dual":
        dom = (nu, plant.p)
        codom = (nu, plant.m)
        evaluate = lambda arg: fac.dual(arg).value  # noqa: E731
    else:
        raise ValueError(f"which must be 'primal' or 'dual', got {which!r}")
    cols = dom[0] * dom[1]
    rows = codom[0] * codom[1]
    mat = np.zeros((rows, cols), dtype=complex)
    probe = np.zeros(dom)
    for idx in range(cols):
        i, j = np.unravel_index(idx, dom, order="F")
        probe[i, j] = 1.0
        mat[:, idx] = _vec(evaluate(probe))
        probe[i, j] = 0.0
    if np.abs(mat.imag).max(initial=0.0) <= 1e-12 * max(
        1.0, np.abs(mat.real).max(initial=0.0)
    ):
        mat = np.ascontiguousarray(mat.real)
    sigma = (
        np.linalg.svd(mat, compute_uv=False)
        if mat.size
        else np.zeros(0)
    )
    rank = numerical_rank(mat)
    return OperatorMatrix(which, mat, sigma, rank, dom, codom)


def solve_operator_equation(
    plant: Plant,
    f,
    which: str,
    target,
    rtol: float = 1e-6,
) -> np.ndarray:
    """Minimum-norm solution X of cp(X) = target (or cd(X) = target).

    Raises :class:`Unsolvable` when the least-squares residual exceeds
    ``rtol * ||target||`` (the operator is not surjective onto the target).
    """
    om = operator_matrix(plant, f, which)
    target = as_matrix(target, "target")
    if target.shape != om.codomain_shape:
        raise ShapeMismatch(
            f"target must be {om.codomain_shape}, got {target.shape}"
        )
    rhs = _vec(target)
    x, *_ = np.linalg.lstsq(om.matrix, rhs, rcond=None)
    resid = np.linalg.norm(om.matrix @ x - rhs)
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    if resid > rtol * scale:
        raise Unsolvable(
            f"operator equation residual {resid:.3e} exceeds "
            f"{rtol:.1e} * ||target||"
        )
    return _unvec(x, om.domain_shape)


# ---------------------------------------------------------------------------
# equivalence batteries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RankWitness:
    """An eigenvalue of F where the Rosenbrock rank condition fails."""

    eigenvalue: complex
    sigma: float
    null_vector: np.ndarray


@dataclass(frozen=True)
class TransferVerdict:
    """Controllability/observability transfer from (F, G) to (F, cd(G)).

    ``hypothesis_full``/``hypothesis_weak`` are the PBH verdicts on the raw
    pair (full spectrum / unstable part); ``image_full``/``image_weak`` the
    corresponding verdicts on the operator image pair.  The implications
    hold whenever the hypotheses and the matching rank condition hold.
    """

    value: np.ndarray
    hypothesis_full: PbhResult
    hypothesis_weak: PbhResult
    image_full: PbhResult
    image_weak: PbhResult
    implication_full: bool
    implication_weak: bool


@dataclass(frozen=True)
class TestReport:
    """Verdicts of the five equivalent statements for one cascade side.

    side "right" (surjectivity side):
      (i) Rosenbrock matrix full row rank at every eigenvalue of F,
      (ii) the regulator-type equation system is solvable for every
           right-hand side, (iii) the dual system has at most one solution,
      (iv) cp surjective, (v) cd injective.

    side "left" (injectivity side): column ranks, uniqueness of the primal
    system, solvability of the dual system, cp injective, cd surjective.

    The five statements are provably equivalent; ``consistent`` is False
    only when numerical rank decisions disagree (a tolerance problem).
    """

    side: str
    rosenbrock_ok: bool
    francis_ok: bool
    dual_francis_ok: bool
    cp_ok: bool
    cd_ok: bool
    consistent: bool
    rosenbrock_unstable_ok: bool
    witnesses: tuple
    transfer: TransferVerdict | None

    # roman-numeral aliases for the equivalent statements
    @property
    def condition_i(self) -> bool:
        return self.rosenbrock_ok

    @property
    def condition_ii(self) -> bool:
        return self.francis_ok

    @property
    def condition_iii(self) -> bool:
        return self.dual_francis_ok

    @property
    def condition_iv(self) -> bool:
        return self.cp_ok

    @property
    def condition_v(self) -> bool:
        return self.cd_ok

    def all_ok(self) -> bool:
        return (
            self.rosenbrock_ok
            and self.francis_ok
            and self.dual_francis_ok
            and self.cp_ok
            and self.cd_ok
        )


def _rosenbrock_rank_scan(plant: Plant, eigs, want: str):
    """Rank of the Rosenbrock matrix at each eigenvalue; returns verdicts."""
    n, m, p = plant.n, plant.m, plant.p
    full = n + p if want == "row" else n + m
    ok_all, ok_unstable = True, True
    witnesses = []
    for lam in eigs:
        r = rosenbrock(plant, lam)
        u, sigma, vh = np.linalg.svd(r)
        tol = max(r.shape) * np.finfo(float).eps * sigma[0]
        rank = int(np.count_nonzero(sigma > tol))
        if rank < full:
            if want == "row":
                null = u[:, rank].conj()
            else:
                null = vh[rank].conj()
            witnesses.append(
                RankWitness(complex(lam), float(sigma[min(full, len(sigma)) - 1]), null)
            )
            ok_all = False
            if lam.real >= -AXIS_BAND:
                ok_unstable = False
    return ok_all, ok_unstable, tuple(witnesses)


def _francis_matrix(plant: Plant) -> callable:
    """Stacked coefficient matrix of the primal regulator-type system.

    Maps (vec Pi, vec Psi) to (vec(Pi F - A Pi - B Psi), vec(C Pi + D Psi)).
    """

    def build(f: np.ndarray) -> np.ndarray:
        n, m, p = plant.n, plant.m, plant.p
        nu = f.shape[0]
        eye_nu = np.eye(nu)
        block11 = np.kron(f.T, np.eye(n)) - np.kron(eye_nu, plant.A)
        block12 = -np.kron(eye_nu, plant.B)
        block21 = np.kron(eye_nu, plant.C)
        block22 = np.kron(eye_nu, plant.D)
        return np.block([[block11, block12], [block21, block22]])

    return build


def _dual_francis_matrix(plant: Plant) -> callable:
    """Stacked coefficient matrix of the dual regulator-type system.

    Maps (vec M, vec G) to (vec(M A - F M - G C), vec(-M B + G D)).
    """

    def build(f: np.ndarray) -> np.ndarray:
        n, m, p = plant.n, plant.m, plant.p
        nu = f.shape[0]
        eye_nu = np.eye(nu)
        block11 = np.kron(plant.A.T, eye_nu) - np.kron(np.eye(n), f)
        block12 = -np.kron(plant.C.T, eye_nu)
        block21 = -np.kron(plant.B.T, eye_nu)
        block22 = np.kron(plant.D.T, eye_nu)
        return np.block([[block11, block12], [block21, block22]])

    return build


def right_invertibility_report(plant: Plant, f, g=None) -> TestReport:
    """Battery of equivalent surjectivity-side tests, optional (F, G) transfer.

    When ``g`` is given, also evaluates controllability/stabilizability of
    (F, cd(G)) and checks the transfer implications against the PBH verdicts
    of the raw pair (F, G).
    """
    f = as_matrix(f, "F")
    fac = SscFactory(plant, f)  # validates the spectral gap
    eigs = np.linalg.eigvals(f)
    ros_ok, ros_weak_ok, witnesses = _rosenbrock_rank_scan(plant, eigs, "row")

    tmat = _francis_matrix(plant)(f)
    francis_ok = numerical_rank(tmat) == tmat.shape[0]
    smat = _dual_francis_matrix(plant)(f)
    dual_francis_ok = numerical_rank(smat) == smat.shape[1]

    cp_ok = operator_matrix(plant, f, "primal").is_surjective
    cd_ok = operator_matrix(plant, f, "dual").is_injective

    transfer = None
    if g is not None:
        g = as_matrix(g, "G")
        value = fac.dual(g).value
        hyp_full = pbh(f, g, "controllable")
        hyp_weak = pbh(f, g, "stabilizable")
        img_full = pbh(f, value, "controllable")
        img_weak = pbh(f, value, "stabilizable")
        transfer = TransferVerdict(
            value,
            hyp_full,
            hyp_weak,
            img_full,
            img_weak,
            implication_full=(not (hyp_full.verdict and ros_ok)) or img_full.verdict,
            implication_weak=(not (hyp_weak.verdict and ros_weak_ok))
            or img_weak.verdict,
        )

    verdicts = (ros_ok, francis_ok, dual_francis_ok, cp_ok, cd_ok)
    return TestReport(
        "right",
        *verdicts,
        consistent=len(set(verdicts)) == 1,
        rosenbrock_unstable_ok=ros_weak_ok,
        witnesses=witnesses,
        transfer=transfer,
    )


def left_invertibility_report(plant: Plant, f, h=None) -> TestReport:
    """Battery of equivalent injectivity-side tests, optional (F, H) transfer.

    When ``h`` is given, also evaluates observability/detectability of
    (F, cp(H)) along with the transfer implications.
    """
    f = as_matrix(f, "F")
    fac = SscFactory(plant, f)
    eigs = np.linalg.eigvals(f)
    ros_ok, ros_weak_ok, witnesses = _rosenbrock_rank_scan(plant, eigs, "column")

    tmat = _francis_matrix(plant)(f)
    francis_ok = numerical_rank(tmat) == tmat.shape[1]
    smat = _dual_francis_matrix(plant)(f)
    dual_francis_ok = numerical_rank(smat) == smat.shape[0]

    cp_ok = operator_matrix(plant, f, "primal").is_injective
    cd_ok = operator_matrix(plant, f, "dual").is_surjective

    transfer = None
    if h is not None:
        h = as_matrix(h, "H")
        value = fac.primal(h).value
        hyp_full = pbh(f, h, "observable")
        hyp_weak = pbh(f, h, "detectable")
        img_full = pbh(f, value, "observable")
        img_weak = pbh(f, value, "detectable")
        transfer = TransferVerdict(
            value,
            hyp_full,
            hyp_weak,
            img_full,
            img_weak,
            implication_full=(not (hyp_full.verdict and ros_ok)) or img_full.verdict,
            implication_weak=(not (hyp_weak.verdict and ros_weak_ok))
            or img_weak.verdict,
        )

    verdicts = (ros_ok, francis_ok, dual_francis_ok, cp_ok, cd_ok)
    return TestReport(
        "left",
        *verdicts,
        consistent=len(set(verdicts)) == 1,
        rosenbrock_unstable_ok=ros_weak_ok,
        witnesses=witnesses,
        transfer=transfer,
    )


def invertibility_ok(plant: Plant, f) -> tuple[bool, tuple]:
    """Square-plant invertibility gate: det Rosenbrock != 0 at each eig(F).

    Returns the verdict and the failing-eigenvalue witnesses.  Requires
    p == m; under that verdict both cp and cd are invertible operators.
    """
    if not plant.is_square:
        return False, ()
    eigs = np.linalg.eigvals(as_matrix(f, "F"))
    ok, _, witnesses = _rosenbrock_rank_scan(plant, eigs, "row")
    return ok, witnesses


# ---------------------------------------------------------------------------
# regulator-type equation systems
# ---------------------------------------------------------------------------

def solve_francis(
    plant: Plant, f, p_mat, q_mat, rtol: float = 1e-8
) -> tuple[np.ndarray, np.ndarray]:
    """Solve Pi F = A Pi + B Psi + P, 0 = C Pi + D Psi + Q.

    One stacked least-squares solve in (vec Pi, vec Psi); returns the
    minimum-norm solution when the system is underdetermined and raises
    :class:`Unsolvable` when the residual exceeds ``rtol`` times the data
    scale.
    """
    f = as_matrix(f, "F")
    p_mat = as_matrix(p_mat, "P")
    q_mat = as_matrix(q_mat, "Q")
    n, m, p, nu = plant.n, plant.m, plant.p, f.shape[0]
    if p_mat.shape != (n, nu) or q_mat.shape != (p, nu):
        raise ShapeMismatch(
            f"P must be {(n, nu)} and Q {(p, nu)}, got {p_mat.shape}, {q_mat.shape}"
        )
    tmat = _francis_matrix(plant)(f)
    rhs = np.concatenate([_vec(p_mat), _vec(-q_mat)])
    sol, *_ = np.linalg.lstsq(tmat, rhs, rcond=None)
    resid = np.linalg.norm(tmat @ sol - rhs)
    scale = max(1.0, np.linalg.norm(rhs))
    if resid > rtol * scale:
        raise Unsolvable(
            f"regulator-type system residual {resid:.3e} exceeds tolerance"
        )
    pi = _unvec(sol[: n * nu], (n, nu))
    psi = _unvec(sol[n * nu :], (m, nu))
    return pi, psi


def solve_dual_francis(
    plant: Plant, f, pbar, qbar, rtol: float = 1e-8
) -> tuple[np.ndarray, np.ndarray]:
    """Solve M A = F M + G C + Pbar, 0 = -M B + G D + Qbar for (M, G)."""
    f = as_matrix(f, "F")
    pbar = as_matrix(pbar, "Pbar")
    qbar = as_matrix(qbar, "Qbar")
    n, m, p, nu = plant.n, plant.m, plant.p, f.shape[0]
    if pbar.shape != (nu, n) or qbar.shape != (nu, m):
        raise ShapeMismatch(
            f"Pbar must be {(nu, n)} and Qbar {(nu, m)}, "
            f"got {pbar.shape}, {qbar.shape}"
        )
    smat = _dual_francis_matrix(plant)(f)
    rhs = np.concatenate([_vec(pbar), _vec(-qbar)])
    sol, *_ = np.linalg.lstsq(smat, rhs, rcond=None)
    resid = np.linalg.norm(smat @ sol - rhs)
    scale = max(1.0, np.linalg.norm(rhs))
    if resid > rtol * scale:
        raise Unsolvable(
            f"dual regulator-type system residual {resid:.3e} exceeds tolerance"
        )
    m_sol = _unvec(sol[: nu * n], (nu, n))
    g_sol = _unvec(sol[nu * n :], (nu, p))
    return m_sol, g_sol


# ---------------------------------------------------------------------------
# polynomial matrix-equation solvability (general form)
# ---------------------------------------------------------------------------

def _polyval_matrix(coeffs: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Evaluate a real-coefficient polynomial at a square matrix (Horner)."""
    out = np.zeros_like(f, dtype=complex)
    for c in coeffs[::-1]:
        out = out @ f + c * np.eye(f.shape[0])
    return out


@dataclass(frozen=True)
class HautusReport:
    """Rank verdicts for the polynomial operator pair built from (R_i, q_i).

    ``hp``/``hd`` are the vectorized matrices of X -> sum R_i X q_i(F) and
    Y -> sum q_i(F) Y R_i.  The four stated equivalences tie their
    surjectivity/injectivity to row/column rank of R(lam) = sum R_i q_i(lam)
    over the eigenvalues of F; ``consistent`` is True when all four agree.
    """

    row_rank_ok: bool
    col_rank_ok: bool
    hp_surjective: bool
    hp_injective: bool
    hd_surjective: bool
    hd_injective: bool
    per_eigenvalue: tuple
    consistent: bool


def hautus_check(f, r_list, q_list) -> HautusReport:
    """Check solvability equivalences for polynomial matrix equations.

    Parameters
    ----------
    f : (nu, nu) array_like
    r_list : sequence of (n1, n2) array_like
        Coefficient matrices, all of one shape.
    q_list : sequence of 1-D array_like
        Real polynomial coefficients in ascending order, one per R_i.
    """
    f = as_matrix(f, "F")
    rs = [as_matrix(r, f"R[{i}]") for i, r in enumerate(r_list)]
    if len(rs) != len(q_list) or not rs:
        raise ShapeMismatch("need equally many R_i and q_i, at least one")
    shape = rs[0].shape
    if any(r.shape != shape for r in rs):
        raise ShapeMismatch("all R_i must share one shape")
    qs = [np.atleast_1d(np.asarray(q, dtype=float)) for q in q_list]

    n1, n2 = shape
    eigs = np.linalg.eigvals(f)
    per_eig = []
    row_ok = col_ok = True
    for lam in eigs:
        r_lam = sum(r * np.polyval(q[::-1], lam) for r, q in zip(rs, qs))
        rank = numerical_rank(r_lam)
        per_eig.append((complex(lam), rank))
        row_ok &= rank == n1
        col_ok &= rank == n2

    qf = [_polyval_matrix(q, f) for q in qs]
    hp = sum(np.kron(qif.T, r) for r, qif in zip(rs, qf))
    hd = sum(np.kron(r.T, qif) for r, qif in zip(rs, qf))
    hp_rank = numerical_rank(hp)
    hd_rank = numerical_rank(hd)
    hp_surj = hp_rank == hp.shape[0]
    hp_inj = hp_rank == hp.shape[1]
    hd_surj = hd_rank == hd.shape[0]
    hd_inj = hd_rank == hd.shape[1]

    consistent = (
        hp_surj == row_ok
        and hp_inj == col_ok
        and hd_surj == col_ok
        and hd_inj == row_ok
    )
    return HautusReport(
        row_ok,
        col_ok,
        hp_surj,
        hp_inj,
        hd_surj,
        hd_inj,
        tuple(per_eig),
        consistent,
    )
