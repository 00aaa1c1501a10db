"""Dataset generation and persistence, weight stores, content hashes.

Datasets are JSON-lines files: one metadata header object followed by one
record per sample.  Floats are serialized with shortest-roundtrip repr, so
identical seeds produce byte-identical files.  Robot and layout hashes are
embedded in datasets and weight stores and verified on load to prevent
cross-experiment contamination.
"""

import hashlib
import json

import numpy as np

from .dynamics import ExternalWrench, JointState, TorqueBreakdown, term_breakdown
from .network import CePU, BasketCell, Microzone, StellateCell, \
    build_microzones

DATASET_VERSION = 1
WEIGHTS_VERSION = 1


class HashMismatchError(RuntimeError):
    """A dataset or weight store belongs to a different robot/layout."""


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _digest(obj):
    return hashlib.sha256(_canonical(obj).encode()).hexdigest()[:16]


def robot_hash(model):
    return _digest({"links": [[l.mass, l.length, l.com_distance,
                               l.inertia_com, l.fric_dynamic, l.fric_static]
                              for l in model.links],
                    "gravity_mag": model.gravity_mag,
                    "base_tilt": model.base_tilt})


def layout_hash(position_layout, speed_layout):
    return _digest({"position": position_layout.to_dict(),
                    "speed": speed_layout.to_dict()})


def generate_dataset(model, spec, position_layout=None):
    """List of (state, wrench, breakdown) records, deterministic in seed.

    Joint positions are drawn uniformly from the position layout's ranges
    when one is given, else from [-pi, pi]; velocities, accelerations, and
    wrench components from the symmetric boxes of the sampling spec.
    """
    rng = np.random.default_rng(spec.seed)
    n = model.n
    if position_layout is not None:
        lo = np.array([r[0] for r in position_layout.ranges])
        hi = np.array([r[1] for r in position_layout.ranges])
    else:
        lo, hi = np.full(n, -np.pi), np.full(n, np.pi)
    records = []
    for _ in range(spec.count):
        state = JointState(rng.uniform(lo, hi),
                           rng.uniform(-spec.qd_max, spec.qd_max, n),
                           rng.uniform(-spec.qdd_max, spec.qdd_max, n))
        wrench = ExternalWrench(*rng.uniform(-spec.wrench_max,
                                             spec.wrench_max, 3))
        records.append((state, wrench, term_breakdown(model, state, wrench)))
    return records


def _breakdown_dict(tb):
    return {"inertial": tb.inertial.tolist(),
            "coriolis": tb.coriolis.tolist(),
            "gravity": tb.gravity.tolist(),
            "fric_dyn": tb.fric_dyn.tolist(),
            "fric_stat": tb.fric_stat.tolist(),
            "external": tb.external.tolist(),
            "total": tb.total.tolist()}


def _breakdown_from(d):
    return TorqueBreakdown(inertial=np.array(d["inertial"]),
                           coriolis=np.array(d["coriolis"]),
                           gravity=np.array(d["gravity"]),
                           fric_dyn=np.array(d["fric_dyn"]),
                           fric_stat=np.array(d["fric_stat"]),
                           external=np.array(d["external"]),
                           total=np.array(d["total"]))


def save_dataset(path, records, model, position_layout, speed_layout, spec):
    header = {"version": DATASET_VERSION,
              "robot_hash": robot_hash(model),
              "layout_hash": layout_hash(position_layout, speed_layout),
              "spec": spec.to_dict(),
              "count": len(records)}
    with open(path, "w") as fh:
        fh.write(_canonical(header) + "\n")
        for state, wrench, tb in records:
            rec = {"q": state.q.tolist(), "qd": state.qd.tolist(),
                   "qdd": state.qdd.tolist(),
                   "wrench": wrench.as_vector().tolist(),
                   "targets": _breakdown_dict(tb)}
            fh.write(_canonical(rec) + "\n")


def load_dataset(path, model=None, position_layout=None, speed_layout=None,
                 spot_check=8, spot_tol=1e-12):
    """Load a dataset; verify hashes and spot-check stored targets against
    a fresh oracle evaluation when the model is given."""
    with open(path) as fh:
        header = json.loads(fh.readline())
        records = []
        for line in fh:
            d = json.loads(line)
            records.append((JointState(np.array(d["q"]), np.array(d["qd"]),
                                       np.array(d["qdd"])),
                            ExternalWrench(*d["wrench"]),
                            _breakdown_from(d["targets"])))
    if model is not None:
        if header["robot_hash"] != robot_hash(model):
            raise HashMismatchError(f"{path}: robot hash mismatch")
        if position_layout is not None and (
                header["layout_hash"]
                != layout_hash(position_layout, speed_layout)):
            raise HashMismatchError(f"{path}: layout hash mismatch")
        step = max(1, len(records) // max(1, spot_check))
        for state, wrench, tb in records[::step][:spot_check]:
            fresh = term_breakdown(model, state, wrench)
            if not np.allclose(fresh.total, tb.total, rtol=spot_tol,
                               atol=spot_tol):
                raise HashMismatchError(
                    f"{path}: stored targets do not regenerate from states")
    return header, records


def save_weights(path, microzones, model, position_layout, speed_layout):
    zones = []
    for mz in microzones:
        zones.append({
            "joint": mz.joint,
            "inertial": [u.weights.tolist() for u in mz.inertial],
            "coriolis": [u.weights.tolist() for u in mz.coriolis],
            "gravity": [u.weights.tolist() for u in mz.gravity],
            "external": [u.weights.tolist() for u in mz.external],
            "basket_stride": mz.baskets[0].sample_stride if mz.baskets else 1,
            "stellate_dyn_gain": mz.stellate_dyn.w_sp,
            "stellate_stat": mz.stellate_stat.w_sc.tolist()})
    doc = {"version": WEIGHTS_VERSION,
           "robot_hash": robot_hash(model),
           "layout_hash": layout_hash(position_layout, speed_layout),
           "census": {"microzones": len(microzones),
                      "units_per_zone": microzones[0].unit_census()
                      if microzones else {}},
           "zones": zones}
    with open(path, "w") as fh:
        fh.write(_canonical(doc))


def load_weights(path, model, position_layout, speed_layout):
    """Rebuild microzones from a weight store, verifying hashes.

    Fixed pathways (basket and dynamic-stellate reconstruction weights) are
    recomputed from the layout; only trainable weights are stored.
    """
    with open(path) as fh:
        doc = json.load(fh)
    if doc["robot_hash"] != robot_hash(model):
        raise HashMismatchError(f"{path}: robot hash mismatch")
    if doc["layout_hash"] != layout_hash(position_layout, speed_layout):
        raise HashMismatchError(f"{path}: layout hash mismatch")
    stride = doc["zones"][0]["basket_stride"] if doc["zones"] else None
    microzones = build_microzones(model, position_layout, speed_layout,
                                  stride=stride)
    for mz, z in zip(microzones, doc["zones"]):
        for u, w in zip(mz.inertial, z["inertial"]):
            u.weights[:] = w
        for u, w in zip(mz.coriolis, z["coriolis"]):
            u.weights[:] = w
        for u, w in zip(mz.gravity, z["gravity"]):
            u.weights[:] = w
        for u, w in zip(mz.external, z["external"]):
            u.weights[:] = w
        mz.stellate_dyn.w_sp = z["stellate_dyn_gain"]
        mz.stellate_stat.w_sc[:] = z["stellate_stat"]
    return microzones


def prepare_training_tuples(records, position_layout, speed_layout):
    """Attach precomputed encodings to dataset records for the trainer."""
    from .encoding import encode_position
    out = []
    for state, wrench, tb in records:
        enc_pos = encode_position(position_layout, state.q)
        enc_speeds = [encode_position(speed_layout, [state.qd[k]])
                      for k in range(len(state.q))]
        out.append((state, wrench.as_vector(), tb, enc_pos, enc_speeds))
    return out
