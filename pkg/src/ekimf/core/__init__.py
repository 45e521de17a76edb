from .ensemble import Ensemble
from .linalg import SpdMatrix, as_spd, cholesky, spd_sqrt_apply, sqrtm_psd
from .noise import NoiseStream, PrefetchedStream, derive_id, philox4x32, prefetched, sample_gaussian

__all__ = [
    "Ensemble",
    "NoiseStream",
    "PrefetchedStream",
    "SpdMatrix",
    "as_spd",
    "cholesky",
    "derive_id",
    "philox4x32",
    "prefetched",
    "sample_gaussian",
    "spd_sqrt_apply",
    "sqrtm_psd",
]
