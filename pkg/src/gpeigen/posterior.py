"""Posterior covariance, trace criterion, sampling, and the BVP path.

Conditioning the zero-mean GP prior on the assembled constraint rows gives

    cov  = K_tt - K_tC (K_CC + jitter I)^+ K_tC^T
    mean = K_tC (K_CC + jitter I)^+ rhs

with a regularized Moore-Penrose pseudoinverse.  For eigenproblems the rhs
is zero, the mean vanishes identically, and all information sits in the
covariance: its trace J(λ) stays near zero away from eigenvalues and peaks
when λ hits one.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .operators import AssembledBlocks, assemble_blocks

DEFAULT_RCOND = 1e-12

NORMALIZATIONS = ("none", "sup_norm", "l2")


class DecompositionError(RuntimeError):
    """A matrix factorization produced or received non-finite values."""


@dataclass
class PseudoinverseDiag:
    """Diagnostics of one regularized pseudoinverse."""

    rank: int
    sv_max: float
    sv_min_kept: float
    truncated_count: int
    jitter_used: float


@dataclass
class PosteriorSummary:
    """Posterior at the test points for one λ."""

    lam: float
    trace_J: float
    cov: np.ndarray
    mean: np.ndarray
    diag: PseudoinverseDiag
    blocks: AssembledBlocks = field(repr=False, default=None)

    @property
    def x_test(self) -> np.ndarray:
        return self.blocks.x_test


@dataclass
class EigenfunctionSample:
    values: np.ndarray
    seed: int
    normalization: str
    residual: float


def _truncated_eigh(M, jitter: float, rcond: float):
    """Eigendecompose M + jitter*I and mark the kept directions.

    The rcond cut applies after the jitter shift and compares magnitudes
    against the largest one.  Returns (w, V, keep, diagnostics).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if jitter < 0:
        raise ValueError(f"jitter must be nonnegative, got {jitter}")
    if not rcond > 0:
        raise ValueError(f"rcond must be positive, got {rcond}")
    if not np.all(np.isfinite(M)):
        raise DecompositionError("matrix has non-finite entries")
    n = M.shape[0]
    A = M + jitter * np.eye(n) if jitter else M
    w, V = np.linalg.eigh(A)
    if not np.all(np.isfinite(w)):
        raise DecompositionError("eigendecomposition returned non-finite values")
    sv = np.abs(w)
    sv_max = float(sv.max()) if n else 0.0
    if sv_max == 0.0:
        keep = np.zeros(n, dtype=bool)
    else:
        keep = sv >= rcond * sv_max
    diag = PseudoinverseDiag(
        rank=int(keep.sum()),
        sv_max=sv_max,
        sv_min_kept=float(sv[keep].min()) if keep.any() else 0.0,
        truncated_count=int(n - keep.sum()),
        jitter_used=float(jitter),
    )
    return w, V, keep, diag


def regularized_pseudoinverse(M, jitter: float = 0.0, rcond: float = DEFAULT_RCOND):
    """Pseudoinverse of the symmetric matrix M + jitter*I.

    Computed by symmetric eigendecomposition; reciprocals of eigenvalues
    whose magnitude falls below rcond * max|eigenvalue| are zeroed.  The
    rcond cut applies after the jitter shift.  Returns (pinv, diagnostics).
    """
    w, V, keep, diag = _truncated_eigh(M, jitter, rcond)
    inv = np.zeros(w.size)
    inv[keep] = 1.0 / w[keep]
    P = (V * inv) @ V.T
    P = 0.5 * (P + P.T)
    return P, diag


def posterior_covariance(
    blocks: AssembledBlocks, jitter: float, rcond: float = DEFAULT_RCOND
) -> PosteriorSummary:
    """Condition the prior on the assembled constraint rows.

    The downdate K_tC (K_CC + jitter I)^+ K_tC^T is evaluated in square-root
    form: with eigenpairs (w_k, v_k) of the shifted Gram, the columns
    u_k = K_tC v_k / sqrt(w_k) have O(1) entries, so K_tt - U U^T loses far
    less to roundoff than the triple product with an explicit pseudoinverse,
    whose 1/w_min amplification otherwise leaks indefiniteness of order
    1e-7 * trace into the result.  Kept directions additionally need w > 0
    here; negative eigenvalues of the shifted Gram are roundoff artifacts
    and have no real square root.
    """
    w, V, keep, diag = _truncated_eigh(blocks.K_CC, jitter, rcond)
    keep = keep & (w > 0)
    diag = dataclasses.replace(
        diag,
        rank=int(keep.sum()),
        sv_min_kept=float(w[keep].min()) if keep.any() else 0.0,
        truncated_count=int(w.size - keep.sum()),
    )
    Vr = V[:, keep] / np.sqrt(w[keep])
    U = blocks.K_tC @ Vr
    cov = blocks.K_tt - U @ U.T
    cov = 0.5 * (cov + cov.T)
    mean = U @ (Vr.T @ blocks.rhs)
    return PosteriorSummary(
        lam=blocks.lam,
        trace_J=float(np.trace(cov)),
        cov=cov,
        mean=mean,
        diag=diag,
        blocks=blocks,
    )


def sample_posterior(
    summary: PosteriorSummary,
    count: int,
    seed: int,
    normalization: str = "sup_norm",
):
    """Draw `count` reproducible samples from N(mean, cov).

    The covariance is factored by symmetric eigendecomposition with
    negative eigenvalues clipped at zero; the subtraction that forms cov
    makes small negatives inevitable off-peak.  Each sample gets its own
    substream derived from (seed, index).  The residual diagnostic pushes
    the raw sample back through the joint cross-covariances to estimate
    the operator values at the interior collocation sites.
    """
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {normalization!r}")
    if not np.all(np.isfinite(summary.cov)):
        raise DecompositionError("covariance has non-finite entries")
    w, V = np.linalg.eigh(summary.cov)
    F = V * np.sqrt(np.clip(w, 0.0, None))

    R = None
    blocks = summary.blocks
    if blocks is not None and blocks.n_interior > 0:
        Ptt, _ = regularized_pseudoinverse(blocks.K_tt, 0.0, DEFAULT_RCOND)
        R = blocks.K_tC[:, : blocks.n_interior].T @ Ptt

    out = []
    for child in np.random.SeedSequence(seed).spawn(count):
        xi = np.random.default_rng(child).standard_normal(w.size)
        raw = summary.mean + F @ xi
        nrm = float(np.linalg.norm(raw))
        residual = 0.0
        if R is not None and nrm > 0:
            residual = float(np.linalg.norm(R @ raw) / nrm)
        values = raw
        if normalization == "sup_norm":
            peak = float(np.max(np.abs(raw)))
            if peak > 0:
                values = raw / peak
        elif normalization == "l2":
            if nrm > 0:
                values = raw / nrm
        out.append(
            EigenfunctionSample(
                values=values,
                seed=int(seed),
                normalization=normalization,
                residual=residual,
            )
        )
    return out


def solve_bvp(problem, N_f: int, rcond: float = DEFAULT_RCOND) -> PosteriorSummary:
    """Posterior for a boundary value problem with N_f interior source rows.

    The problem must be in bvp mode (no λ anywhere); conditioning uses the
    two boundary rows plus N_f equispaced interior rows carrying the source
    values.  λ is irrelevant and fixed at 0 for the assembly call.
    """
    if problem.mode != "bvp":
        raise ValueError(f"problem {problem.problem_id!r} is not in bvp mode")
    if int(N_f) != N_f or N_f < 0:
        raise ValueError(f"N_f must be a nonnegative integer, got {N_f}")
    prob = dataclasses.replace(problem, N=int(N_f))
    blocks = assemble_blocks(prob, 0.0)
    return posterior_covariance(blocks, prob.jitter, rcond)
