"""Spectra, the exact spectral-similarity coefficient, and perturbations.

Two symmetric PSD operators S and S~ are epsilon-spectrally similar when
(1 - eps) S <= S~ <= (1 + eps) S in the PSD order.  The minimal such eps is
computed exactly from the generalized eigenvalues of the pencil (S~, S)
restricted to the range of S: eps = max(mu_max - 1, 1 - mu_min).  This
replaces SDP/LP machinery with a dense symmetric eigenproblem.

Perturbation generators return the perturbed operator together with the
closed-form certified similarity bound:

    relative  S~ = S + (SE + ES)/2,  |E|_op <= d       ->  eps <= d
    additive  S~ = S + D,  |D|_op <= d, D zero on ker S ->  eps <= d / lmin+
    combined  S~ = S + (SE + ES)/2 + D                  ->  eps <= d_R + d_A / lmin+

where lmin+ is the smallest nonzero eigenvalue of S.  The additive bound
holds for any admissible D; the relative bound is exact only when E shares
the eigenbasis of S, which is what :func:`random_relative_direction` draws
(see its docstring for the counterexample scaling).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionError, ConfigError
from .hypergraph import ShiftOperator

# Kernel detection: |lambda| <= 1e-9 * max(1, lambda_max) (scale-free, at the
# eigensolver accuracy floor).
ZERO_RTOL = 1e-9


def _as_operator(s) -> ShiftOperator:
    if isinstance(s, ShiftOperator):
        return s
    return ShiftOperator(np.asarray(s, dtype=float), "custom")


@dataclass(eq=False)
class Spectrum:
    """Ascending eigenvalues with an orthonormal eigenvector basis."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    zero_tol: float

    @property
    def zero_multiplicity(self) -> int:
        return int(np.sum(np.abs(self.eigenvalues) <= self.zero_tol))

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def smallest_nonzero(self) -> float:
        nz = self.eigenvalues[np.abs(self.eigenvalues) > self.zero_tol]
        if nz.size == 0:
            raise AssumptionError("operator has no nonzero eigenvalue")
        return float(nz[0])

    def kernel_basis(self) -> np.ndarray:
        return self.eigenvectors[:, : self.zero_multiplicity]

    def range_basis(self) -> np.ndarray:
        return self.eigenvectors[:, self.zero_multiplicity :]


def zero_tolerance(eigenvalues: np.ndarray) -> float:
    return ZERO_RTOL * max(1.0, float(np.max(np.abs(eigenvalues), initial=0.0)))


def eigendecompose(s) -> Spectrum:
    """Full symmetric eigendecomposition, cached on the shift operator.

    For PSD-tagged operator kinds the smallest eigenvalue is also checked
    against the -1e-9 * lambda_max tolerance.
    """
    op = _as_operator(s)
    if op.spectrum is not None:
        return op.spectrum
    vals, vecs = np.linalg.eigh(op.matrix)
    spec = Spectrum(vals, vecs, zero_tolerance(vals))
    if op.requires_psd() and vals[0] < -ZERO_RTOL * max(vals[-1], 0.0):
        raise AssumptionError(
            f"{op.kind} operator is not PSD: min eigenvalue {vals[0]:.3e}"
        )
    op.spectrum = spec
    return spec


def _require_psd(op: ShiftOperator, name: str) -> Spectrum:
    spec = eigendecompose(op)
    floor = -ZERO_RTOL * max(spec.lambda_max, 1e-300)
    if spec.eigenvalues[0] < floor:
        raise AssumptionError(
            f"{name} is not PSD: min eigenvalue {spec.eigenvalues[0]:.3e}"
        )
    return spec


@dataclass
class SimilarityReport:
    """Result of the exact similarity computation between two operators.

    ``epsilon`` is infinite when the kernel dimensions differ (the PSD
    sandwich is then unsatisfiable).  ``certified`` confirms by direct
    eigenvalue checks that (1 + eps + tol) S - S~ and S~ - (1 - eps - tol) S
    are PSD to tolerance; it is False whenever the kernels merely have equal
    dimension but are misaligned subspaces.
    """

    epsilon: float
    mu_max: float
    mu_min: float
    zero_mult_s: int
    zero_mult_s_tilde: int
    certified: bool
    eigenvalue_ratios: np.ndarray = field(default_factory=lambda: np.zeros(0))


def spectral_similarity(s, s_tilde, certify: bool = True) -> SimilarityReport:
    """Minimal similarity coefficient of the pencil (S~, S) on range(S)."""
    a = _as_operator(s)
    b = _as_operator(s_tilde)
    if a.size != b.size:
        raise ConfigError(f"size mismatch: {a.size} vs {b.size}")
    sa = _require_psd(a, "S")
    sb = _require_psd(b, "S~")
    zm_a, zm_b = sa.zero_multiplicity, sb.zero_multiplicity

    nz_a = sa.eigenvalues[zm_a:]
    nz_b = sb.eigenvalues[zm_b:]
    k = min(nz_a.size, nz_b.size)
    ratios = nz_b[-k:] / nz_a[-k:] if k else np.zeros(0)

    if zm_a != zm_b:
        return SimilarityReport(math.inf, math.inf, -math.inf, zm_a, zm_b, False, ratios)
    if zm_a == a.size:
        # Both operators vanish identically.
        return SimilarityReport(0.0, 1.0, 1.0, zm_a, zm_b, True, ratios)

    w = sa.range_basis() / np.sqrt(nz_a)
    pencil = w.T @ b.matrix @ w
    mu = np.linalg.eigvalsh(0.5 * (pencil + pencil.T))
    mu_min, mu_max = float(mu[0]), float(mu[-1])
    eps = max(mu_max - 1.0, 1.0 - mu_min, 0.0)

    certified_flag = False
    if certify:
        tol = 1e-8
        psd_floor = -1e-8 * max(1.0, sa.lambda_max, sb.lambda_max)
        upper = (1.0 + eps + tol) * a.matrix - b.matrix
        lower = b.matrix - (1.0 - eps - tol) * a.matrix
        certified_flag = bool(
            np.linalg.eigvalsh(upper)[0] >= psd_floor
            and np.linalg.eigvalsh(lower)[0] >= psd_floor
        )
    return SimilarityReport(eps, mu_max, mu_min, zm_a, zm_b, certified_flag, ratios)


@dataclass(eq=False)
class Perturbation:
    """A generated perturbation with its certified similarity bound."""

    kind: str
    relative_part: np.ndarray
    additive_part: np.ndarray
    delta_r: float
    delta_a: float
    bound: float


def operator_norm(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (m + m.T)))))


def _check_symmetric(m: np.ndarray, name: str):
    if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, float(np.abs(m).max()))):
        raise ConfigError(f"{name} must be symmetric")


def _finish_perturbed(s: ShiftOperator, perturbed: np.ndarray, kind: str):
    mat = 0.5 * (perturbed + perturbed.T)
    vals = np.linalg.eigvalsh(mat)
    if vals[0] < -ZERO_RTOL * max(vals[-1], 1.0):
        raise AssumptionError(
            f"{kind} perturbation destroys PSD-ness (min eigenvalue {vals[0]:.3e}); "
            "use a smaller perturbation norm"
        )
    return ShiftOperator(mat, "custom")


def perturb_relative(s, e: np.ndarray):
    """S~ = S + (SE + ES)/2 with bound eps <= |E|_op.

    Returns ``(s_tilde, bound)``.  Raises if the result leaves the PSD cone.
    """
    op = _as_operator(s)
    e = np.asarray(e, dtype=float)
    _check_symmetric(e, "E")
    delta = operator_norm(e)
    s_tilde = _finish_perturbed(op, op.matrix + 0.5 * (op.matrix @ e + e @ op.matrix), "relative")
    return s_tilde, delta


def perturb_additive(s, d: np.ndarray):
    """S~ = S + D with bound eps <= |D|_op / (smallest nonzero eig of S).

    D must vanish on the kernel of S so the kernel is preserved; otherwise no
    finite similarity coefficient exists and the call is rejected.
    """
    op = _as_operator(s)
    d = np.asarray(d, dtype=float)
    _check_symmetric(d, "D")
    spec = _require_psd(op, "S")
    kernel = spec.kernel_basis()
    if kernel.shape[1]:
        leak = float(np.abs(d @ kernel).max())
        if leak > 1e-8 * max(1.0, float(np.abs(d).max())):
            raise AssumptionError(
                "additive perturbation does not vanish on ker(S) "
                f"(leakage {leak:.3e}); kernel condition ker(S) <= ker(D) violated"
            )
    delta = operator_norm(d)
    bound = delta / spec.smallest_nonzero() if delta > 0 else 0.0
    s_tilde = _finish_perturbed(op, op.matrix + d, "additive")
    return s_tilde, bound


def perturb_combined(s, e: np.ndarray, d: np.ndarray):
    """S~ = S + (SE + ES)/2 + D with bound d_R + d_A / (smallest nonzero eig)."""
    op = _as_operator(s)
    e = np.asarray(e, dtype=float)
    d = np.asarray(d, dtype=float)
    _check_symmetric(e, "E")
    _check_symmetric(d, "D")
    spec = _require_psd(op, "S")
    kernel = spec.kernel_basis()
    if kernel.shape[1]:
        leak = float(np.abs(d @ kernel).max()) if d.size else 0.0
        if leak > 1e-8 * max(1.0, float(np.abs(d).max())):
            raise AssumptionError(
                "additive part does not vanish on ker(S); kernel condition violated"
            )
    delta_r = operator_norm(e)
    delta_a = operator_norm(d)
    bound = delta_r + (delta_a / spec.smallest_nonzero() if delta_a > 0 else 0.0)
    perturbed = op.matrix + 0.5 * (op.matrix @ e + e @ op.matrix) + d
    s_tilde = _finish_perturbed(op, perturbed, "combined")
    return s_tilde, bound


def random_symmetric(n: int, target_norm: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian symmetric matrix rescaled to the requested operator norm."""
    g = rng.standard_normal((n, n))
    e = 0.5 * (g + g.T)
    norm = operator_norm(e)
    if norm == 0.0:
        return e
    return e * (target_norm / norm)


def random_relative_direction(s, target_norm: float, rng: np.random.Generator) -> np.ndarray:
    """Random E sharing the eigenbasis of S, rescaled to the target norm.

    The closed-form certificate of :func:`perturb_relative` (coefficient at
    most |E|_op) is a theorem only when E commutes with S; a generic
    symmetric E can push the measured coefficient up to
    |E|_op (sqrt(k) + 1/sqrt(k)) / 2 for condition number k of S (take
    S = diag(1, 1/k) and E proportional to the off-diagonal flip).  The
    certified generator therefore draws random spectral multipliers, which
    also vanish on ker(S) so the perturbed operator stays PSD.
    """
    op = _as_operator(s)
    spec = _require_psd(op, "S")
    u = rng.standard_normal(op.size)
    u[np.abs(spec.eigenvalues) <= spec.zero_tol] = 0.0
    peak = np.abs(u).max()
    if peak > 0:
        u *= target_norm / peak
    e = (spec.eigenvectors * u) @ spec.eigenvectors.T
    return 0.5 * (e + e.T)


def random_additive_direction(s, target_norm: float, rng: np.random.Generator) -> np.ndarray:
    """Random symmetric D with rows and columns projected onto range(S).

    The projection enforces the kernel condition of
    :func:`perturb_additive`; unlike the relative case, the additive
    certificate |D|_op / lambda_min+ is valid for any such D.
    """
    op = _as_operator(s)
    spec = _require_psd(op, "S")
    d = random_symmetric(op.size, target_norm, rng)
    if spec.zero_multiplicity:
        r = spec.range_basis()
        d = r @ (r.T @ d @ r) @ r.T
        d = 0.5 * (d + d.T)
        norm = operator_norm(d)
        if norm > 0:
            d *= target_norm / norm
    return d
