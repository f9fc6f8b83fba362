"""Pure-numpy versions of the compiled batch kernels."""
import numpy as np


def solve_batch(grams, rhs, weights, penalty):
    """Solve one scalarized system per weight row; returns ``(K, p)``."""
    grams = np.asarray(grams, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    M = np.einsum("km,mij->kij", weights, grams)
    M += np.diag(np.asarray(penalty, dtype=np.float64))
    r = weights @ np.asarray(rhs, dtype=np.float64)
    out = np.full(r.shape, np.nan)
    try:
        return np.linalg.solve(M, r[..., None])[..., 0]
    except np.linalg.LinAlgError:
        for k in range(len(M)):
            try:
                out[k] = np.linalg.solve(M[k], r[k])
            except np.linalg.LinAlgError:
                pass
        return out


def quadratic_loss_batch(grams, rhs, weights, penalty, eval_gram, eval_rhs, eval_const):
    """MSE of each weight row's solution under ``(eval_gram, eval_rhs, eval_const)``."""
    beta = solve_batch(grams, rhs, weights, penalty)
    return np.einsum("ki,ij,kj->k", beta, eval_gram, beta) - 2.0 * beta @ eval_rhs + eval_const
