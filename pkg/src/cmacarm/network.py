"""Trainable per-term torque approximators and their microzone assembly.

Each joint owns one microzone.  Inside it, one weighted-sum unit per term
family of the equation of motion approximates that term: inertial, gravity
and external units multiply a learned position function by a rate-coded
variable; the Coriolis row multiplies n position units by fixed-weight
speed reconstructions (basket cells) with the self pathway masked; friction
is handled by two stellate pathways (a trainable scalar gain on a speed
reconstruction, and a trainable function over a 1-d speed encoding).

Learning is normalized LMS on the active weights, driven by per-term errors.
"""

from dataclasses import dataclass, field

import numpy as np

from .encoding import encode_position, modulate

TERM_FAMILIES = ("inertial", "coriolis", "gravity", "external",
                 "fric_dyn", "fric_stat")

_EPS = 1e-8


class TrainingDivergence(RuntimeError):
    """Raised when an epoch's RMS grows tenfold or errors go non-finite."""


@dataclass
class CePU:
    """One Purkinje-cell output: weighted sum over active cells times a
    rate-coded modulation variable."""

    term_kind: str      # inertial | coriolis | gravity | external
    joint: int          # k, row of the equation of motion
    index: int          # m (inertial), i (coriolis PC), or component id
    weights: np.ndarray

    def eval(self, encoded, mod_value):
        if len(self.weights) != encoded.size:
            raise ValueError("activation does not match this unit's encoder")
        return float(encoded.values @ self.weights[encoded.indices]) * mod_value


def cepu_eval(cepu, encoded, mod_value):
    return cepu.eval(encoded, mod_value)


@dataclass
class BasketCell:
    """Fixed-weight sparse sampler that reconstructs one joint speed from
    the speed-modulated position activation."""

    speed_index: int
    sample_stride: int
    w_bc: np.ndarray    # full-length vector, zero off the sampled subset

    def eval(self, speed_modulated):
        return float(speed_modulated.values
                     @ self.w_bc[speed_modulated.indices])


def basket_eval(basket, speed_modulated):
    return basket.eval(speed_modulated)


@dataclass
class StellateCell:
    """Friction pathway.  dynamic: fixed w_sc reconstructs the joint speed,
    trainable scalar w_sp is the viscous coefficient.  static: trainable
    w_sc over a 1-d speed encoding, w_sp fixed at 1."""

    kind: str
    joint: int
    w_sc: np.ndarray
    w_sp: float = 1.0

    def eval_dynamic(self, speed_modulated):
        recon = float(speed_modulated.values @ self.w_sc[speed_modulated.indices])
        return recon * self.w_sp

    def eval_static(self, speed_encoded):
        return float(speed_encoded.values @ self.w_sc[speed_encoded.indices])


def stellate_dynamic_eval(cell, speed_modulated):
    if cell.kind != "dynamic":
        raise ValueError("expected a dynamic-friction stellate")
    return cell.eval_dynamic(speed_modulated)


def stellate_static_eval(cell, speed_encoded):
    if cell.kind != "static":
        raise ValueError("expected a static-friction stellate")
    return cell.eval_static(speed_encoded)


@dataclass
class Microzone:
    """Per-joint collection of units whose outputs sum to the joint torque."""

    joint: int
    n: int
    position_layout: object
    speed_layout: object
    inertial: list      # n CePUs, modulated by qdd_m
    coriolis: list      # n CePUs, modulated by qd_i and the basket sum
    gravity: list       # 2 CePUs, modulated by gx, gy
    external: list      # 3 CePUs, modulated by fx, fy, mz
    baskets: list       # n BasketCells
    stellate_dyn: StellateCell = None
    stellate_stat: StellateCell = None

    def unit_census(self):
        return {"inertial": len(self.inertial), "coriolis": len(self.coriolis),
                "gravity": len(self.gravity), "external": len(self.external),
                "baskets": len(self.baskets), "stellates": 2}


@dataclass(frozen=True)
class TrainingConfig:
    rate: float = 0.3
    epochs: int = 20
    seed: int = 0
    sample_count: int = None     # optional cap on samples used per epoch
    supervision: str = "per-term"

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.supervision not in ("per-term", "per-joint"):
            raise ValueError("supervision must be 'per-term' or 'per-joint'")


def calibrate_reconstruction(layout, stride, n_probe=512, seed=12345):
    """Least-squares weights over a strided cell subset so the weighted sum
    of activations is 1 everywhere; modulated activations then reconstruct
    the modulation variable.  Exact for partition-of-unity fields at
    stride 1; fit over a probe grid otherwise."""
    p = layout.size
    sampled = np.arange(0, p, max(1, int(stride)))
    if stride <= 1 and layout.field_shape in ("rectangular", "triangular",
                                              "smooth-product"):
        w = np.full(p, 1.0 / layout.tilings)
        return w
    rng = np.random.default_rng(seed)
    lo = np.array([r[0] for r in layout.ranges])
    hi = np.array([r[1] for r in layout.ranges])
    probes = rng.uniform(lo, hi, size=(n_probe, layout.dims))
    A = np.zeros((n_probe, len(sampled)))
    col = {c: j for j, c in enumerate(sampled)}
    for g, q in enumerate(probes):
        act = encode_position(layout, q)
        for i, v in zip(act.indices, act.values):
            j = col.get(int(i))
            if j is not None:
                A[g, j] = v
    sol, *_ = np.linalg.lstsq(A, np.ones(n_probe), rcond=None)
    w = np.zeros(p)
    w[sampled] = sol
    return w


def default_stride(layout):
    """Two samples per receptive-field width, at least one cell."""
    support = {"rectangular": 1, "triangular": 2, "smooth-product": 4}
    return max(1, support[layout.field_shape] // 2)


def build_microzones(model, position_layout, speed_layout, golgi_params=None,
                     stride=None):
    """One microzone per joint; the position encoder and the fixed speed
    reconstructions are shared across joints."""
    n = model.n
    p = position_layout.size
    if stride is None:
        stride = default_stride(position_layout)
    w_recon = calibrate_reconstruction(position_layout, stride)
    zones = []
    for k in range(n):
        zones.append(Microzone(
            joint=k, n=n,
            position_layout=position_layout, speed_layout=speed_layout,
            inertial=[CePU("inertial", k, m, np.zeros(p)) for m in range(n)],
            coriolis=[CePU("coriolis", k, i, np.zeros(p)) for i in range(n)],
            gravity=[CePU("gravity", k, c, np.zeros(p)) for c in range(2)],
            external=[CePU("external", k, c, np.zeros(p)) for c in range(3)],
            baskets=[BasketCell(j, stride, w_recon) for j in range(n)],
            stellate_dyn=StellateCell("dynamic", k, w_recon, w_sp=0.0),
            stellate_stat=StellateCell("static", k,
                                       np.zeros(speed_layout.size), w_sp=1.0)))
    return zones


def planar_unit_census(n):
    """Unit count across all microzones for the planar term set
    (n inertial + n coriolis + 2 gravity + 3 external per joint, plus two
    stellates per joint)."""
    return n * (n + n + 2 + 3) + 2 * n


def _basket_sums(mz, encoded_pos, qd):
    return np.array([b.eval(modulate(encoded_pos, qd[b.speed_index]))
                     for b in mz.baskets])


def coriolis_row_eval(mz, encoded_pos, qd):
    """Factorized velocity-product torque for this microzone's joint.

    Sum over i of PC_i (modulated by qd_i) times the shared basket sum,
    with the joint's own basket removed from its own PC's multiplier.
    """
    b = _basket_sums(mz, encoded_pos, qd)
    total = b.sum()
    k = mz.joint
    out = 0.0
    for i, pc in enumerate(mz.coriolis):
        mult = total - (b[k] if i == k else 0.0)
        out += pc.eval(encoded_pos, qd[i]) * mult
    return out


def microzone_eval(mz, state, gravity_vec, wrench_vec, encoded_pos=None,
                   encoded_speed=None):
    """Total approximated torque for this microzone's joint."""
    if encoded_pos is None:
        encoded_pos = encode_position(mz.position_layout, state.q)
    if encoded_speed is None:
        encoded_speed = encode_position(mz.speed_layout, [state.qd[mz.joint]])
    terms = microzone_terms(mz, state, gravity_vec, wrench_vec,
                            encoded_pos, encoded_speed)
    return sum(terms.values())


def microzone_terms(mz, state, gravity_vec, wrench_vec, encoded_pos,
                    encoded_speed):
    """Per-family contributions of this microzone (sums to its torque)."""
    k = mz.joint
    out = {}
    out["inertial"] = sum(pc.eval(encoded_pos, state.qdd[m])
                          for m, pc in enumerate(mz.inertial))
    out["coriolis"] = coriolis_row_eval(mz, encoded_pos, state.qd)
    out["gravity"] = sum(pc.eval(encoded_pos, gravity_vec[c])
                         for c, pc in enumerate(mz.gravity))
    out["external"] = sum(pc.eval(encoded_pos, wrench_vec[c])
                          for c, pc in enumerate(mz.external))
    out["fric_dyn"] = mz.stellate_dyn.eval_dynamic(
        modulate(encoded_pos, state.qd[k]))
    out["fric_stat"] = mz.stellate_stat.eval_static(encoded_speed)
    return out


def _nlms_scalar(w, idx, x, error, rate):
    """w[idx] += rate * error * x / (|x|^2 + eps); returns nothing."""
    norm = float(x @ x) + _EPS
    w[idx] += (rate * error / norm) * x


def train_step(mz, state, gravity_vec, wrench_vec, targets, cfg,
               encoded_pos=None, encoded_speed=None):
    """One normalized-LMS update of every trainable weight in the microzone.

    targets is the oracle TorqueBreakdown for the sample.  Returns the
    per-family errors measured before the update.
    """
    k = mz.joint
    if encoded_pos is None:
        encoded_pos = encode_position(mz.position_layout, state.q)
    if encoded_speed is None:
        encoded_speed = encode_position(mz.speed_layout, [state.qd[k]])
    idx, vals = encoded_pos.indices, encoded_pos.values
    terms = microzone_terms(mz, state, gravity_vec, wrench_vec,
                            encoded_pos, encoded_speed)

    b = _basket_sums(mz, encoded_pos, state.qd)
    total_b = b.sum()
    recon = float(modulate(encoded_pos, state.qd[k]).values
                  @ mz.stellate_dyn.w_sc[idx])

    errors = {
        "inertial": float(targets.inertial[k].sum()) - terms["inertial"],
        "coriolis": float(targets.coriolis[k].sum()) - terms["coriolis"],
        "gravity": float(targets.gravity[k].sum()) - terms["gravity"],
        "external": float(targets.external[k].sum()) - terms["external"],
        "fric_dyn": float(targets.fric_dyn[k]) - terms["fric_dyn"],
        "fric_stat": float(targets.fric_stat[k]) - terms["fric_stat"],
    }
    if not all(np.isfinite(v) for v in errors.values()):
        raise TrainingDivergence(f"non-finite error for joint {k}: {errors}")

    if cfg.supervision == "per-joint":
        # only the total torque is observable: one NLMS step over every
        # trainable weight of the microzone with the shared joint error
        e = float(targets.total[k]) - sum(terms.values())
        if not np.isfinite(e):
            raise TrainingDivergence(f"non-finite error for joint {k}")
        regs = [(u.weights, idx, vals * float(state.qdd[u.index]))
                for u in mz.inertial]
        regs += [(pc.weights, idx,
                  vals * (state.qd[i] * (total_b - (b[k] if i == k else 0.0))))
                 for i, pc in enumerate(mz.coriolis)]
        regs += [(u.weights, idx, vals * float(gravity_vec[u.index]))
                 for u in mz.gravity]
        regs += [(u.weights, idx, vals * float(wrench_vec[u.index]))
                 for u in mz.external]
        regs += [(mz.stellate_stat.w_sc, encoded_speed.indices,
                  encoded_speed.values)]
        norm = _EPS + recon * recon + sum(float(x @ x) for _, _, x in regs)
        g = cfg.rate * e / norm
        for w, ix, x in regs:
            w[ix] += g * x
        mz.stellate_dyn.w_sp += g * recon
        return {f: e for f in TERM_FAMILIES}

    # per-term supervision: independent NLMS per unit where the breakdown
    # gives a per-unit target, row-shared NLMS for the Coriolis factorization
    for u in mz.inertial:
        mod = float(state.qdd[u.index])
        e = float(targets.inertial[k, u.index]) - u.eval(encoded_pos, mod)
        _nlms_scalar(u.weights, idx, vals * mod, e, cfg.rate)
    for u in mz.gravity:
        mod = float(gravity_vec[u.index])
        e = float(targets.gravity[k, u.index]) - u.eval(encoded_pos, mod)
        _nlms_scalar(u.weights, idx, vals * mod, e, cfg.rate)
    for u in mz.external:
        mod = float(wrench_vec[u.index])
        e = float(targets.external[k, u.index]) - u.eval(encoded_pos, mod)
        _nlms_scalar(u.weights, idx, vals * mod, e, cfg.rate)

    regs = []
    norm = _EPS
    for i, pc in enumerate(mz.coriolis):
        mult = state.qd[i] * (total_b - (b[k] if i == k else 0.0))
        x = vals * mult
        regs.append((pc.weights, x))
        norm += float(x @ x)
    g = cfg.rate * errors["coriolis"] / norm
    for w, x in regs:
        w[idx] += g * x

    mz.stellate_dyn.w_sp += (cfg.rate * errors["fric_dyn"] * recon
                             / (recon * recon + _EPS))
    _nlms_scalar(mz.stellate_stat.w_sc, encoded_speed.indices,
                 encoded_speed.values, errors["fric_stat"], cfg.rate)

    return errors


@dataclass
class TrainingReport:
    """Per-epoch RMS and max abs error per term family; epoch 0 is the
    pre-training baseline."""

    epochs: list = field(default_factory=list)  # list of dicts

    def rows(self):
        out = []
        for rec in self.epochs:
            for fam in TERM_FAMILIES:
                out.append({"epoch": rec["epoch"], "term_family": fam,
                            "rms": rec["rms"][fam],
                            "max_abs_err": rec["max_abs"][fam]})
        return out


def _epoch_stats(errs):
    # errors may overflow to inf on the way to the divergence guard
    with np.errstate(over="ignore"):
        rms = {f: float(np.sqrt(np.mean(np.square(v)))) if v else 0.0
               for f, v in errs.items()}
        mx = {f: float(np.max(np.abs(v))) if v else 0.0
              for f, v in errs.items()}
    return rms, mx


def evaluate_errors(microzones, dataset, gravity_vec):
    """Per-family prediction errors over a dataset, no weight updates."""
    errs = {f: [] for f in TERM_FAMILIES}
    for state, wrench_vec, targets, enc_pos, enc_speeds in dataset:
        for mz in microzones:
            k = mz.joint
            terms = microzone_terms(mz, state, gravity_vec, wrench_vec,
                                    enc_pos, enc_speeds[k])
            errs["inertial"].append(float(targets.inertial[k].sum())
                                    - terms["inertial"])
            errs["coriolis"].append(float(targets.coriolis[k].sum())
                                    - terms["coriolis"])
            errs["gravity"].append(float(targets.gravity[k].sum())
                                   - terms["gravity"])
            errs["external"].append(float(targets.external[k].sum())
                                    - terms["external"])
            errs["fric_dyn"].append(float(targets.fric_dyn[k])
                                    - terms["fric_dyn"])
            errs["fric_stat"].append(float(targets.fric_stat[k])
                                     - terms["fric_stat"])
    return errs


def train(microzones, dataset, cfg, gravity_vec):
    """Epoch-based online training over a prepared dataset.

    dataset is a sequence of (state, wrench_vec, targets, encoded_pos,
    encoded_speeds) tuples; encodings may be precomputed once since the
    samples are fixed.  Deterministic for a fixed cfg.seed.

    Report rows: epoch 0 is a pre-training evaluation pass, epochs
    1..E-1 carry the online (pre-update) error statistics, and the final
    epoch row is a full post-training evaluation so it matches a separate
    evaluation of the stored weights on the same data.
    """
    if len(dataset) == 0:
        raise ValueError("dataset must be nonempty")
    if cfg.sample_count is not None:
        dataset = dataset[:cfg.sample_count]
    rng = np.random.default_rng(cfg.seed)
    report = TrainingReport()

    base = evaluate_errors(microzones, dataset, gravity_vec)
    rms, mx = _epoch_stats(base)
    report.epochs.append({"epoch": 0, "rms": rms, "max_abs": mx})
    prev_rms = rms

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(dataset))
        errs = {f: [] for f in TERM_FAMILIES}
        for s in order:
            state, wrench_vec, targets, enc_pos, enc_speeds = dataset[s]
            for mz in microzones:
                e = train_step(mz, state, gravity_vec, wrench_vec, targets,
                               cfg, enc_pos, enc_speeds[mz.joint])
                for f, v in e.items():
                    errs[f].append(v)
        if epoch == cfg.epochs:
            final = evaluate_errors(microzones, dataset, gravity_vec)
            rms, mx = _epoch_stats(final)
        else:
            rms, mx = _epoch_stats(errs)
        report.epochs.append({"epoch": epoch, "rms": rms, "max_abs": mx})
        for f in TERM_FAMILIES:
            if prev_rms[f] > 0 and rms[f] > 10.0 * prev_rms[f]:
                raise TrainingDivergence(
                    f"family {f} RMS grew from {prev_rms[f]:.3e} to "
                    f"{rms[f]:.3e} in epoch {epoch}")
        prev_rms = rms
    return report
