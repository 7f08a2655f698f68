"""selfpred: closed-form predictors for two-branch self-predictive learning.

Dense-numerics library plus experiment CLI covering:

- from-scratch dense kernels (Jacobi eigendecomposition, SVD, power-iteration
  operator norm, pseudo-inverse),
- inverse-free matrix square-root iterations (Visser, Newton-Schulz, chained
  NS^2) and Stiefel projection / polar decomposition,
- the closed-form predictor catalog (LRP, DirectPred, DirectCopy, NE, Visser,
  NS, NS^2, Stiefel) with ridge and predictor-EMA post-processing,
- Riemannian gradients and quasi-orthogonality diagnostics on the Stiefel
  manifold,
- streaming PCA (Oja, Krasulina, matrix-Krasulina) and the rank-1
  BYOL/Krasulina equivalence,
- a desk-scale two-branch training loop with stop-gradient and target EMA,
  instrumented with stable-rank / spectrum / polar-distance diagnostics.
"""

__version__ = "0.1.0"
