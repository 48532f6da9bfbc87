"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable, and as the
reference the extension is tested against.  Both modules expose the same
three functions with the same signatures.
"""

import numpy as np

# Jitter levels (relative to trace/n) tried after a failed Cholesky.
JITTER_LEVELS = (1e-10, 1e-9, 1e-8)


def resample_weights(src_centers, tgt_centers, tgt_sigmas, truncate):
    """Row-normalized Gaussian response matrix of shape (n_target, n_source).

    ``truncate`` is the half-width of the support in units of sigma; a
    negative value disables truncation.  Rows whose weights all vanish are
    returned as all-zero so the caller can raise.
    """
    src = np.asarray(src_centers, dtype=np.float64)
    tgt = np.asarray(tgt_centers, dtype=np.float64)
    sig = np.asarray(tgt_sigmas, dtype=np.float64)
    diff = src[None, :] - tgt[:, None]
    w = np.exp(-0.5 * (diff / sig[:, None]) ** 2)
    if truncate >= 0:
        w[np.abs(diff) > truncate * sig[:, None]] = 0.0
    total = w.sum(axis=1)
    ok = total > 0
    w[ok] /= total[ok, None]
    return w


def composite_gram(A, B, sigma2, length_scale):
    """Dot-product plus RBF kernel between rows of ``A`` and ``B`` (no white term)."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    sq = _sq_dists(A, B)
    # einsum rather than A @ B.T so each entry depends only on its own two rows
    dot = np.einsum("ik,jk->ij", A, B)
    return dot + sigma2 + np.exp(-sq / (2.0 * length_scale * length_scale))


def _sq_dists(A, B):
    # explicit differences keep k_r(x, x) == 1 exactly
    return ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)


def _cholesky_with_jitter(M):
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        pass
    n = M.shape[0]
    scale = np.trace(M) / n
    for level in JITTER_LEVELS:
        try:
            return np.linalg.cholesky(M + level * scale * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    return None


def kernel_grid_rmse(Z_train, y_train, Z_val, y_val, sigma2s, lengths, noises, center):
    """Validation RMSE of kernel regression for every (sigma2, length, noise).

    Returns an array of shape (len(sigma2s), len(lengths), len(noises)).  A
    grid point whose regularized Gram matrix cannot be factorized even after
    jitter is reported as NaN.  With ``center`` the training-target mean is
    subtracted before solving and added back to the predictions (GPR);
    otherwise the raw targets are used (KRR).
    """
    Z_train = np.asarray(Z_train, dtype=np.float64)
    Z_val = np.asarray(Z_val, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.float64)
    sigma2s = np.asarray(sigma2s, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.float64)
    noises = np.asarray(noises, dtype=np.float64)
    n = Z_train.shape[0]

    offset = y_train.mean() if center else 0.0
    yc = y_train - offset

    dot_tt = Z_train @ Z_train.T
    dot_vt = Z_val @ Z_train.T
    sq_tt = _sq_dists(Z_train, Z_train)
    sq_vt = _sq_dists(Z_val, Z_train)

    inv2l2 = 1.0 / (2.0 * lengths * lengths)
    rbf_tt = np.exp(-sq_tt[None] * inv2l2[:, None, None])  # (L, n, n)
    rbf_vt = np.exp(-sq_vt[None] * inv2l2[:, None, None])  # (L, m, n)
    base = dot_tt[None, None] + sigma2s[:, None, None, None] + rbf_tt[None]  # (S, L, n, n)
    cross = dot_vt[None, None] + sigma2s[:, None, None, None] + rbf_vt[None]  # (S, L, m, n)

    eye = np.eye(n)
    A = base[:, :, None] + noises[None, None, :, None, None] * eye  # (S, L, D, n, n)
    try:
        chol = np.linalg.cholesky(A)
        failed = np.zeros(A.shape[:3], dtype=bool)
    except np.linalg.LinAlgError:
        chol = np.empty_like(A)
        failed = np.zeros(A.shape[:3], dtype=bool)
        for idx in np.ndindex(*A.shape[:3]):
            L = _cholesky_with_jitter(A[idx])
            if L is None:
                failed[idx] = True
                chol[idx] = eye
            else:
                chol[idx] = L

    rhs = np.broadcast_to(yc, A.shape[:4])[..., None]
    u = np.linalg.solve(chol, rhs)
    alpha = np.linalg.solve(np.swapaxes(chol, -1, -2), u)[..., 0]  # (S, L, D, n)
    pred = np.einsum("slmn,sldn->sldm", cross, alpha) + offset
    rmse = np.sqrt(np.mean((pred - y_val) ** 2, axis=-1))
    rmse[failed] = np.nan
    return rmse
