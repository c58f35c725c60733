from .bessel import bessel_i0, bessel_i1, log_bessel_i0, mean_resultant, mean_resultant_inverse
from .vmf import (
    McEstimate,
    SumVmfApprox,
    TheoremRecord,
    VmfParams,
    sum_vmf_approx,
    theorem1_check,
    theorem1_grid,
    vmf_kl_closed,
    vmf_kl_monte_carlo,
    vmf_normalized_sum_sample_2d,
    vmf_sample_2d,
    vmf_sum_sample_2d,
)

__all__ = [
    "McEstimate",
    "SumVmfApprox",
    "TheoremRecord",
    "VmfParams",
    "bessel_i0",
    "bessel_i1",
    "log_bessel_i0",
    "mean_resultant",
    "mean_resultant_inverse",
    "sum_vmf_approx",
    "theorem1_check",
    "theorem1_grid",
    "vmf_kl_closed",
    "vmf_kl_monte_carlo",
    "vmf_normalized_sum_sample_2d",
    "vmf_sample_2d",
    "vmf_sum_sample_2d",
]
