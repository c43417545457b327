"""Selected kernel backend (numba when available and not disabled)."""

from __future__ import annotations

from ._accel import USE_NUMBA

if USE_NUMBA:
    from ._kernels_nb import (  # noqa: F401
        CLAMP, bvn_cdf, bvn_cdf_vec, loglik, loglik_grad, ndtr, ndtr_vec, ndtri, ndtri_vec,
    )
else:
    from ._kernels_np import (  # noqa: F401
        CLAMP, bvn_cdf, bvn_cdf_vec, loglik, loglik_grad, ndtr, ndtr_vec, ndtri, ndtri_vec,
    )
