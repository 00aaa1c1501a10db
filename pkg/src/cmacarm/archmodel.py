"""Table-lookup architecture arithmetic for dynamics computation.

Closed-form processor counts, table memory sizes, and latency models for
three ways of computing an n-joint dynamics model: one flat lookup table
over the full (q, qd, qdd) space, one structured table per term processing
unit, and recursive multiprocessor evaluation.  All sizes are exact Python
integers; b^(3n) overflows 64-bit arithmetic well before n = 10.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class ArchitectureParams:
    n: int                      # degrees of freedom
    b: int = 16                 # quantization levels per input dimension
    t_ins: float = 100e-6       # seconds per instruction
    t_c: float = 10e-3          # control period
    n_dm: int = 1000            # instruction count of the dynamics model
    bytes_per_entry: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.b < 2:
            raise ValueError("b must be >= 2")
        if self.t_ins <= 0 or self.t_c <= 0:
            raise ValueError("t_ins and t_c must be positive")
        if self.bytes_per_entry < 1:
            raise ValueError("bytes_per_entry must be >= 1")


@dataclass(frozen=True)
class ArchitectureEstimate:
    address_bits: int
    entries: int
    memory_bytes: int
    pu_count_layer1: int
    pu_count_layer2: int
    latency_s: float


def _address_bits(entries):
    # smallest address width covering the fully populated table
    return (entries - 1).bit_length()


def pu_count(n):
    """First- and second-layer processing-unit counts.

    Layer 1 has one unit per equation-of-motion term per joint, with the
    3-component gravity and 6-component wrench counting of the full spatial
    form: n*(n + n^2 + 3 + 3 + 6).  Layer 2 sums one unit per joint.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return n * (n + n * n + 3 + 3 + 6), n


def unstructured_table(params):
    """Flat lookup over the whole 3n-dimensional input space."""
    entries = params.b ** (3 * params.n)
    return ArchitectureEstimate(
        address_bits=_address_bits(entries),
        entries=entries,
        memory_bytes=params.bytes_per_entry * entries,
        pu_count_layer1=1, pu_count_layer2=0,
        latency_s=1 * params.t_ins)


def structured_table(params):
    """Per-term lookup: each unit's nonlinear factor depends on q only."""
    entries = params.b ** params.n
    layer1, layer2 = pu_count(params.n)
    return ArchitectureEstimate(
        address_bits=_address_bits(entries),
        entries=entries,
        memory_bytes=params.bytes_per_entry * entries,
        pu_count_layer1=layer1, pu_count_layer2=layer2,
        latency_s=2 * params.t_ins)


def latencies(params):
    """(single-processor, multiprocessor-recursive, two-layer-table) delays.

    Recursion over n forward and n backward steps bounds the
    multiprocessor delay; the two-layer table needs one lookup plus one
    summation step regardless of n.
    """
    t_single = params.n_dm * params.t_ins
    t_multi = 2 * params.n * params.t_ins
    t_layered = 2 * params.t_ins
    return t_single, t_multi, t_layered


def meets_deadline(params):
    return latencies(params)[2] <= params.t_c


def reduction_factor(params):
    """Exact entry-count ratio of unstructured vs per-unit structured table."""
    return params.b ** (3 * params.n) // params.b ** params.n


def encoder_memory(position_layout, speed_layout, n, bytes_per_weight=8):
    """Trainable-weight storage of the built network across n microzones.

    Counts the position-layout weight vectors of every CePU (n inertial +
    n coriolis + 2 gravity + 3 external per joint), the static-friction
    speed weights, and the scalar viscous gain per joint.
    """
    if n == 0:
        return 0
    per_zone = (2 * n + 5) * position_layout.size + speed_layout.size + 1
    return n * per_zone * bytes_per_weight


def si_approx(value):
    """Human-readable power-of-1024 rendering of an exact byte count."""
    units = ["B", "KiB", "MiB", "GiB", "TiB", "PiB", "EiB"]
    v = float(value)
    for u in units:
        if v < 1024 or u == units[-1]:
            return f"{v:.3g} {u}"
        v /= 1024.0
    return f"{v:.3g} {units[-1]}"
