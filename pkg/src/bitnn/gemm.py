"""xnor/popcount GEMM kernels and their benchmark harness.

All xnor kernels compute the popcount-domain product of two packed ±1
operands: ``C[m, n] = popcount(xnor(A_row_m, B_col_n))``, an integer in
[0, K] returned as float32. The signed dot product is ``2*C - K``
(``qmath.map_xnor_to_dot``). Accumulation is int32 and exact; float32
holds it exactly while K stays below 2**24, which the dims type
enforces.

Four variants share one traversal (rows, then 64-bit words of the
reduction, then a long contiguous sweep over columns):

* ``xnor_base``: straight three-level loop.
* ``xnor_blocked``: same loops tiled over row/word blocks.
* ``xnor_unrolled``: reduction unrolled two words at a time.
* ``xnor_parallel``: unrolled kernel over disjoint row ranges on a
  thread pool; the partition is static, so results are bit-identical
  for any worker count.

Population counts use the LLVM ctpop intrinsic, which lowers to the
native popcount instruction where one exists and to shift/mask code
where not; ``_ctpop64_soft`` is the explicit portable version pinned
against it in tests.
"""

import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np
from llvmlite import ir
from numba.core import types
from numba.extending import intrinsic

from .bitpack import BitMatrix, binarize, pack_matrix_a, pack_matrix_b, words_per_bits
from .tensor import gemm_f32

THREADS_ENV_VAR = "BMX_THREADS"

# K above this bound would overflow float32's exact integer range.
MAX_K_EXACT = 1 << 24

DEFAULT_BLOCK_ROWS = 32
DEFAULT_BLOCK_WORDS = 512

CSV_HEADER = "kernel,M,N,K,repeats,median_ns,pack_ns,checksum,seed"


@intrinsic
def _ctpop64(typingctx, x):
    if x != types.uint64:
        return None
    sig = types.uint64(types.uint64)

    def codegen(context, builder, signature, args):
        (val,) = args
        fn = builder.module.declare_intrinsic("llvm.ctpop", [ir.IntType(64)])
        return builder.call(fn, [val])

    return sig, codegen


_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


@numba.njit(cache=True, nogil=True)
def _ctpop64_soft(x):
    x = x - ((x >> np.uint64(1)) & _M1)
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return (x * _H01) >> np.uint64(56)


@numba.njit(cache=True, nogil=True)
def _xnor_rows(aw, bw, c, m0, m1):
    wpk = aw.shape[1]
    n = bw.shape[1]
    for m in range(m0, m1):
        for w in range(wpk):
            apart = aw[m, w]
            for j in range(n):
                c[m, j] += np.int32(_ctpop64(~(apart ^ bw[w, j])))


@numba.njit(cache=True, nogil=True)
def _xnor_rows_soft(aw, bw, c, m0, m1):
    wpk = aw.shape[1]
    n = bw.shape[1]
    for m in range(m0, m1):
        for w in range(wpk):
            apart = aw[m, w]
            for j in range(n):
                c[m, j] += np.int32(_ctpop64_soft(~(apart ^ bw[w, j])))


@numba.njit(cache=True, nogil=True)
def _xnor_blocked(aw, bw, c, block_rows, block_words):
    m_total, wpk = aw.shape
    n = bw.shape[1]
    for mb in range(0, m_total, block_rows):
        m_hi = min(mb + block_rows, m_total)
        for wb in range(0, wpk, block_words):
            w_hi = min(wb + block_words, wpk)
            for m in range(mb, m_hi):
                for w in range(wb, w_hi):
                    apart = aw[m, w]
                    for j in range(n):
                        c[m, j] += np.int32(_ctpop64(~(apart ^ bw[w, j])))


@numba.njit(cache=True, nogil=True)
def _xnor_tiled_span(aw, bw, c, m0, m1, block_rows, block_words):
    # blocking and two-word unrolling combined, restricted to rows [m0, m1)
    wpk = aw.shape[1]
    n = bw.shape[1]
    for mb in range(m0, m1, block_rows):
        m_hi = min(mb + block_rows, m1)
        for wb in range(0, wpk, block_words):
            w_hi = min(wb + block_words, wpk)
            for m in range(mb, m_hi):
                w = wb
                while w + 2 <= w_hi:
                    a0 = aw[m, w]
                    a1 = aw[m, w + 1]
                    for j in range(n):
                        c[m, j] += np.int32(_ctpop64(~(a0 ^ bw[w, j]))) + np.int32(
                            _ctpop64(~(a1 ^ bw[w + 1, j]))
                        )
                    w += 2
                if w < w_hi:
                    a0 = aw[m, w]
                    for j in range(n):
                        c[m, j] += np.int32(_ctpop64(~(a0 ^ bw[w, j])))


@numba.njit(cache=True, nogil=True)
def _xnor_rows_unrolled(aw, bw, c, m0, m1):
    wpk = aw.shape[1]
    n = bw.shape[1]
    for m in range(m0, m1):
        w = 0
        while w + 2 <= wpk:
            a0 = aw[m, w]
            a1 = aw[m, w + 1]
            for j in range(n):
                c[m, j] += np.int32(_ctpop64(~(a0 ^ bw[w, j]))) + np.int32(
                    _ctpop64(~(a1 ^ bw[w + 1, j]))
                )
            w += 2
        if w < wpk:
            a0 = aw[m, w]
            for j in range(n):
                c[m, j] += np.int32(_ctpop64(~(a0 ^ bw[w, j])))


@dataclass(frozen=True)
class GemmDims:
    """Validated problem size for a packed GEMM."""

    m: int
    n: int
    k: int

    def __post_init__(self):
        if min(self.m, self.n, self.k) < 1:
            raise ValueError(f"GEMM dims must be positive, got {self}")
        if self.k >= MAX_K_EXACT:
            raise ValueError(
                f"K={self.k} exceeds {MAX_K_EXACT - 1}; popcounts would lose "
                "exactness in float32 outputs"
            )

    @property
    def words_per_k(self) -> int:
        return words_per_bits(self.k)

    @property
    def operand_bytes(self) -> int:
        """Rough working-set estimate: float operands, packed words, output."""
        floats = 4 * (self.m * self.k + self.k * self.n)
        packed = 8 * self.words_per_k * (self.m + self.n)
        out = 4 * self.m * self.n
        return floats + packed + out


def resolve_workers(explicit=None) -> int:
    """Worker count: explicit argument, then BMX_THREADS, then CPU count."""
    if explicit is not None:
        workers = int(explicit)
    else:
        env = os.environ.get(THREADS_ENV_VAR)
        if env is not None:
            try:
                workers = int(env)
            except ValueError:
                raise ValueError(
                    f"{THREADS_ENV_VAR} must be a positive integer, got {env!r}"
                ) from None
        else:
            workers = os.cpu_count() or 1
    if workers < 1:
        raise ValueError(f"worker count must be positive, got {workers}")
    return workers


def _check_operands(a: BitMatrix, b: BitMatrix):
    if a.layout != "a" or b.layout != "b":
        raise ValueError(f"operand layouts must be ('a', 'b'), got ({a.layout!r}, {b.layout!r})")
    if a.pad_fill != 0 or b.pad_fill != 1:
        raise ValueError("operands must use complementary padding (a: 0, b: 1)")
    if a.n_bits != b.n_bits:
        raise ValueError(f"reduction lengths differ: {a.n_bits} vs {b.n_bits}")
    GemmDims(a.vectors, b.vectors, a.n_bits)
    aw = np.ascontiguousarray(a.words)
    bw = np.ascontiguousarray(b.words)
    c = np.zeros((a.vectors, b.vectors), dtype=np.int32)
    return aw, bw, c


def xnor_gemm_base(a: BitMatrix, b: BitMatrix) -> np.ndarray:
    """Reference packed product; popcount-domain float32 [M, N]."""
    aw, bw, c = _check_operands(a, b)
    _xnor_rows(aw, bw, c, 0, a.vectors)
    return c.astype(np.float32)


def xnor_gemm_blocked(
    a: BitMatrix,
    b: BitMatrix,
    block_rows: int = DEFAULT_BLOCK_ROWS,
    block_words: int = DEFAULT_BLOCK_WORDS,
) -> np.ndarray:
    """Tiled variant; tile sizes are overridable, output is unchanged."""
    if block_rows < 1 or block_words < 1:
        raise ValueError("tile sizes must be positive")
    aw, bw, c = _check_operands(a, b)
    _xnor_blocked(aw, bw, c, block_rows, block_words)
    return c.astype(np.float32)


def xnor_gemm_unrolled(a: BitMatrix, b: BitMatrix) -> np.ndarray:
    """Reduction unrolled two words at a time; fastest serial variant here."""
    aw, bw, c = _check_operands(a, b)
    _xnor_rows_unrolled(aw, bw, c, 0, a.vectors)
    return c.astype(np.float32)


def xnor_gemm_parallel(
    a: BitMatrix,
    b: BitMatrix,
    workers=None,
    block_rows: int = DEFAULT_BLOCK_ROWS,
    block_words: int = DEFAULT_BLOCK_WORDS,
) -> np.ndarray:
    """Tiled, unrolled kernel row-partitioned across ``workers`` threads.

    Rows are split into contiguous, disjoint ranges up front, so the
    result does not depend on scheduling order or worker count; integer
    accumulation keeps it bit-identical to the base kernel.
    """
    if block_rows < 1 or block_words < 1:
        raise ValueError("tile sizes must be positive")
    workers = min(resolve_workers(workers), a.vectors)
    aw, bw, c = _check_operands(a, b)
    if workers == 1:
        _xnor_tiled_span(aw, bw, c, 0, a.vectors, block_rows, block_words)
        return c.astype(np.float32)
    m = a.vectors
    step = (m + workers - 1) // workers
    spans = [(lo, min(lo + step, m)) for lo in range(0, m, step)]
    with ThreadPoolExecutor(max_workers=len(spans)) as pool:
        jobs = [
            pool.submit(_xnor_tiled_span, aw, bw, c, lo, hi, block_rows, block_words)
            for lo, hi in spans
        ]
        for job in jobs:
            job.result()
    return c.astype(np.float32)


def xnor_gemm_base_soft(a: BitMatrix, b: BitMatrix) -> np.ndarray:
    """Base kernel on the portable popcount; for cross-checking only."""
    aw, bw, c = _check_operands(a, b)
    _xnor_rows_soft(aw, bw, c, 0, a.vectors)
    return c.astype(np.float32)


KERNEL_IDS = ("naive_f32", "xnor_base", "xnor_blocked", "xnor_unrolled", "xnor_parallel")


def run_kernel(kernel: str, a_f32, b_f32, a_bm=None, b_bm=None, **kw) -> np.ndarray:
    """Run one kernel by id; xnor results come back in the popcount domain."""
    if kernel == "naive_f32":
        return gemm_f32(a_f32, b_f32)
    if a_bm is None:
        a_bm = pack_matrix_a(a_f32)
    if b_bm is None:
        b_bm = pack_matrix_b(b_f32)
    if kernel == "xnor_base":
        return xnor_gemm_base(a_bm, b_bm)
    if kernel == "xnor_blocked":
        return xnor_gemm_blocked(
            a_bm,
            b_bm,
            kw.get("block_rows", DEFAULT_BLOCK_ROWS),
            kw.get("block_words", DEFAULT_BLOCK_WORDS),
        )
    if kernel == "xnor_unrolled":
        return xnor_gemm_unrolled(a_bm, b_bm)
    if kernel == "xnor_parallel":
        return xnor_gemm_parallel(
            a_bm,
            b_bm,
            kw.get("workers"),
            kw.get("block_rows", DEFAULT_BLOCK_ROWS),
            kw.get("block_words", DEFAULT_BLOCK_WORDS),
        )
    raise ValueError(f"unknown kernel {kernel!r}; choose from {KERNEL_IDS}")


@dataclass
class BenchRecord:
    """One benchmark measurement; field order matches the CSV schema."""

    kernel: str
    m: int
    n: int
    k: int
    repeats: int
    median_ns: int
    pack_ns: int
    checksum: int
    seed: int

    def to_csv_row(self) -> str:
        return (
            f"{self.kernel},{self.m},{self.n},{self.k},{self.repeats},"
            f"{self.median_ns},{self.pack_ns},{self.checksum},{self.seed}"
        )


def records_to_csv(records) -> str:
    lines = [CSV_HEADER]
    lines.extend(r.to_csv_row() for r in records)
    return "\n".join(lines) + "\n"


def make_operands(dims: GemmDims, seed: int):
    """Deterministic ±1 float32 operands for a given seed."""
    rng = np.random.default_rng(seed)
    choices = np.array([-1.0, 1.0], dtype=np.float32)
    a = rng.choice(choices, size=(dims.m, dims.k))
    b = rng.choice(choices, size=(dims.k, dims.n))
    return a, b


def checksum_popcount(c: np.ndarray, kernel: str, dims: GemmDims) -> int:
    """Popcount-domain sum of the output, identical across kernels.

    The float32 kernel's signed output is mapped elementwise through
    (dot + K) / 2 first; sums stay below 2**53, so the float64
    accumulation is exact.
    """
    total = float(c.sum(dtype=np.float64))
    if kernel == "naive_f32":
        total = (total + float(dims.m) * dims.n * dims.k) / 2.0
    return int(round(total))


def benchmark_kernel(
    kernel: str,
    dims: GemmDims,
    repeats: int = 5,
    warmup: int = 1,
    seed: int = 0,
    block_rows: int = DEFAULT_BLOCK_ROWS,
    block_words: int = DEFAULT_BLOCK_WORDS,
    workers=None,
) -> BenchRecord:
    """Time one kernel on seeded ±1 operands and checksum its output.

    ``median_ns`` is the median of ``repeats`` timed runs after
    ``warmup`` untimed ones. ``pack_ns`` is the cost of binarizing and
    packing the right operand (the activation side, which inference pays
    per call); the left operand is packed once outside the clock, the
    way deployed weights would be. The float32 kernel packs nothing and
    records 0.
    """
    if kernel not in KERNEL_IDS:
        raise ValueError(f"unknown kernel {kernel!r}; choose from {KERNEL_IDS}")
    if repeats < 1 or warmup < 0:
        raise ValueError("repeats must be >= 1 and warmup >= 0")
    a_f32, b_f32 = make_operands(dims, seed)
    kw = {"block_rows": block_rows, "block_words": block_words, "workers": workers}

    a_bm = b_bm = None
    pack_ns = 0
    if kernel != "naive_f32":
        a_bm = pack_matrix_a(a_f32)
        t0 = time.perf_counter_ns()
        b_bm = pack_matrix_b(binarize(b_f32))
        pack_ns = time.perf_counter_ns() - t0

    c = None
    samples = []
    for i in range(warmup + repeats):
        t0 = time.perf_counter_ns()
        c = run_kernel(kernel, a_f32, b_f32, a_bm, b_bm, **kw)
        elapsed = time.perf_counter_ns() - t0
        if i >= warmup:
            samples.append(elapsed)
    return BenchRecord(
        kernel=kernel,
        m=dims.m,
        n=dims.n,
        k=dims.k,
        repeats=repeats,
        median_ns=int(statistics.median(samples)),
        pack_ns=pack_ns,
        checksum=checksum_popcount(c, kernel, dims),
        seed=seed,
    )
