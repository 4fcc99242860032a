"""meshloop: an unstructured-mesh parallel-loop runtime.

Declare sets, maps and dats on a :class:`Mesh`, express computations as
:class:`Loop` descriptors with per-argument access modes, and execute
them race-free on serial, colored-threads, message-passing-rank, or
two-class hybrid backends.
"""
from .core import (AOS, INC, MAX, MIN, READ, RW, SOA, WRITE, AccessMode, Dat,
                   DeclError, ExecError, FrozenError, Global, Layout, Loop,
                   LoopArg, LoopError, Map, Mesh, MeshError, Set, arg_direct,
                   arg_global, arg_indirect, transform_layout)
from .executor import (BackendConfig, ExchangeTimeout, RunResult,
                       build_layout, reduce_global, run_hybrid, run_program,
                       run_ranks, run_serial, run_threads)
from .meshio import FormatError, dump_mesh, format_mesh, load_mesh, parse_mesh
from .partition import (HaloStatsRow, PartitionAssignment, RankLayout,
                        build_halos, derive_assignments, halo_stats,
                        halo_stats_csv, partition_rcb, partition_trivial,
                        partition_weighted)
from .plan import ExecPlan, PlanConfig, PlanStats, build_plan, plan_for, plan_stats
from .renumber import (BandwidthStats, Permutation, apply_permutation,
                       bandwidth_metric, compute_ordering, renumber_mesh,
                       row_order_by_targets)
from .perf import PerfCollector, PerfRecord, emit_report, useful_bytes

__version__ = "0.1.0"
