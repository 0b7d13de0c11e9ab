"""simtsolve: a multicore simulator of the SIMT execution model with an
iterative linear-solver library built on top of it."""

from .device import (
    F32,
    F64,
    Device,
    DeviceBuffer,
    ElemKind,
    HostBuffer,
    copy_device_to_host,
    copy_host_to_device,
    create_buffer,
    device_alloc,
    device_free,
    enqueue_read_buffer,
    enqueue_write_buffer,
    get_default_device,
    release_buffer,
)
from .errors import (
    BreakdownError,
    CapacityError,
    DataRaceError,
    DiagonalError,
    KindMismatchError,
    LaunchConfigError,
    LengthMismatchError,
    SimtError,
    UseAfterFreeError,
)
from .executor import (
    Dim3,
    Executor,
    Kernel,
    LaunchConfig,
    ThreadCtx,
    block_linear_id,
    enqueue_nd_range,
    get_default_executor,
    global_linear_id,
    launch,
    set_worker_count,
)
from .kernels import (
    CsrMatrix,
    DenseMatrix,
    k_axpy,
    k_csr_spmv,
    k_dot,
    k_gemm,
    k_jacobi_sweep,
    k_nrm2,
)
from .matrices import MatrixMarketError, gen_poisson, load_matrix_market
from .solvers import (
    FLOW_STEPS,
    Method,
    SolverConfig,
    SolverReport,
    bicgstab_iterate,
    cg_iterate,
    gauss_seidel_iterate,
    gmres_iterate,
    jacobi_iterate,
    solve,
)
from .terminology import TERM_TABLE, UnknownTermError, terminology_lookup

__version__ = "0.1.0"
