"""Binary neural networks with bit-packed xnor/popcount inference.

Weights of quantized layers live in {-1, +1}, are trained in float with
straight-through gradients, and deploy as 64-bit packed words whose
matrix products run on xnor + popcount instead of multiply-add. The
float training path and the packed inference path compute identical
values, so accuracy never changes at deployment; only the bytes shrink
(32x per packed layer) and the kernels change.
"""

from .bitpack import BitMatrix, binarize, pack_matrix_a, pack_matrix_b
from .gemm import (
    BenchRecord,
    GemmDims,
    benchmark_kernel,
    xnor_gemm_base,
    xnor_gemm_blocked,
    xnor_gemm_parallel,
    xnor_gemm_unrolled,
)
from .layers import INFER_FLOAT, INFER_PACKED, TRAIN_FLOAT, Network, build_lenet
from .modelio import convert, load_model, save_model, verify_equivalence
from .qmath import map_dot_to_xnor, map_xnor_to_dot, quantize, quantize_signed

__version__ = "0.1.0"

__all__ = [
    "BitMatrix",
    "binarize",
    "pack_matrix_a",
    "pack_matrix_b",
    "BenchRecord",
    "GemmDims",
    "benchmark_kernel",
    "xnor_gemm_base",
    "xnor_gemm_blocked",
    "xnor_gemm_parallel",
    "xnor_gemm_unrolled",
    "INFER_FLOAT",
    "INFER_PACKED",
    "TRAIN_FLOAT",
    "Network",
    "build_lenet",
    "convert",
    "load_model",
    "save_model",
    "verify_equivalence",
    "quantize",
    "quantize_signed",
    "map_dot_to_xnor",
    "map_xnor_to_dot",
    "__version__",
]
