import copy

import numpy as np
import pytest

from cmacarm import network as net
from cmacarm.dataio import generate_dataset, prepare_training_tuples
from cmacarm.config import DatasetSpec
from cmacarm.dynamics import JointState, term_breakdown
from cmacarm.encoding import BasisLayout, encode_position, modulate

RNG = np.random.default_rng(5)


def sample_tuple(model, layout, speed_layout, state, wrench=None):
    from cmacarm.dynamics import ExternalWrench
    wrench = wrench or ExternalWrench()
    tb = term_breakdown(model, state, wrench)
    enc_pos = encode_position(layout, state.q)
    enc_speeds = [encode_position(speed_layout, [state.qd[k]])
                  for k in range(model.n)]
    return state, wrench.as_vector(), tb, enc_pos, enc_speeds


class TestCePU:
    def test_zero_weights_silent(self, small_layout):
        u = net.CePU("gravity", 0, 0, np.zeros(small_layout.size))
        act = encode_position(small_layout, [0.5])
        assert u.eval(act, 3.0) == 0.0

    def test_encoder_mismatch_rejected(self, small_layout):
        u = net.CePU("gravity", 0, 0, np.zeros(small_layout.size + 1))
        act = encode_position(small_layout, [0.5])
        with pytest.raises(ValueError, match="encoder"):
            u.eval(act, 1.0)

    def test_exact_linearity_in_modulation(self, small_layout):
        u = net.CePU("inertial", 0, 0, RNG.normal(size=small_layout.size))
        act = encode_position(small_layout, [-0.3])
        base = net.cepu_eval(u, act, 2.0)
        assert net.cepu_eval(u, act, 8.0) == 4.0 * base
        assert net.cepu_eval(u, act, 0.0) == 0.0

    def test_modulation_commutes_with_encoding(self, small_layout):
        # weighting a modulated activation equals modulating the output
        u = net.CePU("external", 0, 0, RNG.normal(size=small_layout.size))
        act = encode_position(small_layout, [1.1])
        mod = modulate(act, 2.0)
        assert u.eval(mod, 1.0) == u.eval(act, 2.0)


class TestBasketReconstruction:
    def test_rectangular_reconstructs_speed(self, layout_2d):
        w = net.calibrate_reconstruction(layout_2d, 1)
        basket = net.BasketCell(0, 1, w)
        for _ in range(30):
            q = RNG.uniform(-np.pi, np.pi, 2)
            qd = RNG.uniform(-3, 3)
            act = encode_position(layout_2d, q)
            out = net.basket_eval(basket, modulate(act, qd))
            assert out == pytest.approx(qd, rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("shape", ["triangular", "smooth-product"])
    def test_graded_fields_reconstruct(self, shape):
        lay = BasisLayout(ranges=((-np.pi, np.pi),), tilings=6,
                          cells_per_dim=10, field_shape=shape)
        w = net.calibrate_reconstruction(lay, 1)
        basket = net.BasketCell(0, 1, w)
        for _ in range(30):
            q = RNG.uniform(-np.pi, np.pi, 1)
            qd = RNG.uniform(-3, 3)
            out = basket.eval(modulate(encode_position(lay, q), qd))
            assert out == pytest.approx(qd, rel=1e-9, abs=1e-12)

    def test_strided_subset_reconstructs(self):
        lay = BasisLayout(ranges=((-np.pi, np.pi),), tilings=8,
                          cells_per_dim=20, field_shape="smooth-product")
        w = net.calibrate_reconstruction(lay, 2)
        assert np.all(w[1::2] == 0)  # only the sampled subset carries weight
        basket = net.BasketCell(0, 2, w)
        # the fit is least-squares over a probe distribution; judge it there
        rng = np.random.default_rng(12345)
        errs = []
        for q in rng.uniform(-np.pi, np.pi, size=(200, 1)):
            qd = RNG.uniform(-3, 3)
            out = basket.eval(modulate(encode_position(lay, q), qd))
            errs.append(out - qd)
        assert np.sqrt(np.mean(np.square(errs))) < 0.1

    def test_default_stride(self):
        rect = BasisLayout(ranges=((-1, 1),), tilings=2, cells_per_dim=4)
        tri = BasisLayout(ranges=((-1, 1),), tilings=2, cells_per_dim=4,
                          field_shape="triangular")
        smooth = BasisLayout(ranges=((-1, 1),), tilings=2, cells_per_dim=4,
                             field_shape="smooth-product")
        assert net.default_stride(rect) == 1
        assert net.default_stride(tri) == 1
        assert net.default_stride(smooth) == 2


class TestMicrozoneStructure:
    def test_unit_census(self, twolink, layout_2d, speed_layout):
        zones = net.build_microzones(twolink, layout_2d, speed_layout)
        assert len(zones) == 2
        census = zones[0].unit_census()
        assert census == {"inertial": 2, "coriolis": 2, "gravity": 2,
                          "external": 3, "baskets": 2, "stellates": 2}

    def test_planar_unit_census(self):
        assert net.planar_unit_census(1) == 9
        assert net.planar_unit_census(2) == 22
        assert net.planar_unit_census(3) == 3 * (3 + 3 + 5) + 6

    def test_initial_output_is_zero(self, twolink, layout_2d, speed_layout):
        zones = net.build_microzones(twolink, layout_2d, speed_layout)
        state = JointState([0.2, -0.4], [1.0, -2.0], [0.5, 0.5])
        out = net.microzone_eval(zones[0], state, twolink.gravity_vec,
                                 np.zeros(3))
        assert out == 0.0

    def test_stellate_kind_guards(self, speed_layout):
        dyn_cell = net.StellateCell("dynamic", 0, np.zeros(4))
        stat_cell = net.StellateCell("static", 0, np.zeros(speed_layout.size))
        enc = encode_position(speed_layout, [0.5])
        with pytest.raises(ValueError):
            net.stellate_static_eval(dyn_cell, enc)
        with pytest.raises(ValueError):
            net.stellate_dynamic_eval(stat_cell, enc)


class TestCoriolisFactorization:
    def test_quadratic_scaling_exact(self, twolink, layout_2d, speed_layout):
        zones = net.build_microzones(twolink, layout_2d, speed_layout)
        mz = zones[1]
        for pc in mz.coriolis:
            pc.weights[:] = RNG.normal(size=len(pc.weights))
        q = RNG.uniform(-np.pi, np.pi, 2)
        qd = np.array([1.25, -0.5])  # powers of two keep the scaling exact
        enc = encode_position(layout_2d, q)
        base = net.coriolis_row_eval(mz, enc, qd)
        assert net.coriolis_row_eval(mz, enc, 2.0 * qd) == 4.0 * base
        assert net.coriolis_row_eval(mz, enc, np.zeros(2)) == 0.0

    def test_self_term_masked(self, twolink, layout_2d, speed_layout):
        # when only the row's own joint moves, the row output is exactly 0,
        # mirroring the vanishing self-coefficient of the oracle
        zones = net.build_microzones(twolink, layout_2d, speed_layout)
        for mz in zones:
            for pc in mz.coriolis:
                pc.weights[:] = RNG.normal(size=len(pc.weights))
        q = RNG.uniform(-np.pi, np.pi, 2)
        enc = encode_position(layout_2d, q)
        for k, mz in enumerate(zones):
            qd = np.zeros(2)
            qd[k] = 2.0
            assert net.coriolis_row_eval(mz, enc, qd) == 0.0


class TestTrainStep:
    def cfg(self, **kw):
        return net.TrainingConfig(**{"rate": 0.5, "epochs": 1, **kw})

    def test_fixed_pathways_never_updated(self, twolink, layout_2d,
                                          speed_layout):
        for supervision in ("per-term", "per-joint"):
            zones = net.build_microzones(twolink, layout_2d, speed_layout)
            mz = zones[0]
            w_bc_before = [b.w_bc.copy() for b in mz.baskets]
            w_sc_before = mz.stellate_dyn.w_sc.copy()
            w_sp_stat_before = mz.stellate_stat.w_sp
            state = JointState([0.2, -0.4], [1.0, -2.0], [0.5, 0.5])
            tup = sample_tuple(twolink, layout_2d, speed_layout, state)
            net.train_step(mz, state, twolink.gravity_vec, tup[1], tup[2],
                           self.cfg(supervision=supervision), tup[3],
                           tup[4][0])
            for b, w in zip(mz.baskets, w_bc_before):
                assert np.array_equal(b.w_bc, w)
            assert np.array_equal(mz.stellate_dyn.w_sc, w_sc_before)
            assert mz.stellate_stat.w_sp == w_sp_stat_before

    def test_zones_do_not_share_trainable_weights(self, twolink, layout_2d,
                                                  speed_layout):
        zones = net.build_microzones(twolink, layout_2d, speed_layout)
        state = JointState([0.2, -0.4], [1.0, -2.0], [0.5, 0.5])
        tup = sample_tuple(twolink, layout_2d, speed_layout, state)
        before = copy.deepcopy(zones[1])
        net.train_step(zones[0], state, twolink.gravity_vec, tup[1], tup[2],
                       self.cfg(), tup[3], tup[4][0])
        for name in ("inertial", "coriolis", "gravity", "external"):
            for u, u0 in zip(getattr(zones[1], name), getattr(before, name)):
                assert np.array_equal(u.weights, u0.weights)
        assert np.array_equal(zones[1].stellate_stat.w_sc,
                              before.stellate_stat.w_sc)
        assert zones[1].stellate_dyn.w_sp == before.stellate_dyn.w_sp

    def test_update_matches_gradient(self, pendulum, small_layout,
                                     speed_layout):
        # the per-unit update must point along the negative gradient of the
        # squared error, scaled by rate / ||x||^2
        zones = net.build_microzones(pendulum, small_layout, speed_layout)
        mz = zones[0]
        mz.inertial[0].weights[:] = RNG.normal(size=small_layout.size)
        state = JointState([0.4], [0.0], [2.0])
        tup = sample_tuple(pendulum, small_layout, speed_layout, state)
        enc_pos = tup[3]
        w0 = mz.inertial[0].weights.copy()

        def sq_err(w):
            u = net.CePU("inertial", 0, 0, w)
            return (float(tup[2].inertial[0, 0])
                    - u.eval(enc_pos, state.qdd[0])) ** 2

        grad = np.zeros_like(w0)
        eps = 1e-6
        for j in enc_pos.indices:
            dw = np.zeros_like(w0)
            dw[j] = eps
            grad[j] = (sq_err(w0 + dw) - sq_err(w0 - dw)) / (2 * eps)
        x = np.zeros_like(w0)
        x[enc_pos.indices] = enc_pos.values * state.qdd[0]
        rate = 0.5
        expected = w0 - (rate / (2 * (x @ x))) * grad
        net.train_step(mz, state, pendulum.gravity_vec, tup[1], tup[2],
                       self.cfg(), tup[3], tup[4][0])
        assert np.allclose(mz.inertial[0].weights[enc_pos.indices],
                           expected[enc_pos.indices], rtol=1e-4, atol=1e-10)

    def test_geometric_error_decay(self, pendulum, small_layout,
                                   speed_layout):
        # repeating one binary-activation sample shrinks the error by
        # exactly (1 - rate) per step
        zones = net.build_microzones(pendulum, small_layout, speed_layout)
        mz = zones[0]
        state = JointState([0.4], [0.0], [2.0])
        tup = sample_tuple(pendulum, small_layout, speed_layout, state)
        rate = 0.25
        cfg = self.cfg(rate=rate)
        errs = [net.train_step(mz, state, pendulum.gravity_vec, tup[1],
                               tup[2], cfg, tup[3], tup[4][0])["inertial"]
                for _ in range(6)]
        for a, b in zip(errs, errs[1:]):
            assert b == pytest.approx((1 - rate) * a, rel=1e-6)

    def test_divergence_on_nonfinite(self, pendulum, small_layout,
                                     speed_layout):
        zones = net.build_microzones(pendulum, small_layout, speed_layout)
        mz = zones[0]
        mz.inertial[0].weights[:] = np.nan
        state = JointState([0.4], [0.0], [2.0])
        tup = sample_tuple(pendulum, small_layout, speed_layout, state)
        with pytest.raises(net.TrainingDivergence):
            net.train_step(mz, state, pendulum.gravity_vec, tup[1], tup[2],
                           self.cfg(), tup[3], tup[4][0])


class TestTraining:
    def small_dataset(self, model, layout, speed_layout, count=300, seed=3):
        spec = DatasetSpec(count=count, seed=seed, holdout=0.0,
                           qd_max=3.0, qdd_max=5.0, wrench_max=3.0)
        records = generate_dataset(model, spec, layout)
        return prepare_training_tuples(records, layout, speed_layout)

    def test_zero_epochs_reports_baseline(self, pendulum_friction,
                                          small_layout, speed_layout):
        data = self.small_dataset(pendulum_friction, small_layout,
                                  speed_layout, count=50)
        zones = net.build_microzones(pendulum_friction, small_layout,
                                     speed_layout)
        cfg = net.TrainingConfig(rate=0.5, epochs=0)
        report = net.train(zones, data, cfg, pendulum_friction.gravity_vec)
        assert len(report.epochs) == 1
        # untouched weights predict zero, so the baseline error is the target
        targets = [float(tb.gravity[0].sum()) for _, _, tb, _, _ in data]
        assert report.epochs[0]["rms"]["gravity"] == pytest.approx(
            np.sqrt(np.mean(np.square(targets))), rel=1e-12)

    def test_pendulum_learns_unit_inertia(self, pendulum, small_layout,
                                          speed_layout):
        data = self.small_dataset(pendulum, small_layout, speed_layout)
        zones = net.build_microzones(pendulum, small_layout, speed_layout)
        cfg = net.TrainingConfig(rate=0.5, epochs=10, seed=0)
        net.train(zones, data, cfg, pendulum.gravity_vec)
        # the learned position function is flat at the true d11 = 1
        for q in np.linspace(-3, 3, 13):
            enc = encode_position(small_layout, [q])
            assert zones[0].inertial[0].eval(enc, 1.0) == pytest.approx(
                1.0, abs=0.02)

    def test_stellate_pathways_learn_friction(self, pendulum_friction,
                                              small_layout, speed_layout):
        data = self.small_dataset(pendulum_friction, small_layout,
                                  speed_layout, count=500)
        zones = net.build_microzones(pendulum_friction, small_layout,
                                     speed_layout)
        cfg = net.TrainingConfig(rate=0.5, epochs=10, seed=0)
        net.train(zones, data, cfg, pendulum_friction.gravity_vec)
        assert zones[0].stellate_dyn.w_sp == pytest.approx(0.5, abs=0.01)
        enc_p = encode_position(speed_layout, [1.0])
        enc_m = encode_position(speed_layout, [-1.0])
        fs_p = zones[0].stellate_stat.eval_static(enc_p)
        fs_m = zones[0].stellate_stat.eval_static(enc_m)
        assert fs_p == pytest.approx(0.3, rel=0.05)
        assert fs_m == pytest.approx(-0.3, rel=0.05)

    def test_final_epoch_row_matches_evaluation(self, pendulum, small_layout,
                                                speed_layout):
        data = self.small_dataset(pendulum, small_layout, speed_layout,
                                  count=100)
        zones = net.build_microzones(pendulum, small_layout, speed_layout)
        cfg = net.TrainingConfig(rate=0.5, epochs=3, seed=0)
        report = net.train(zones, data, cfg, pendulum.gravity_vec)
        errs = net.evaluate_errors(zones, data, pendulum.gravity_vec)
        for fam in net.TERM_FAMILIES:
            rms = float(np.sqrt(np.mean(np.square(errs[fam]))))
            assert abs(report.epochs[-1]["rms"][fam] - rms) <= 1e-9

    def test_seed_determinism(self, twolink, layout_2d, speed_layout):
        data = self.small_dataset(twolink, layout_2d, speed_layout, count=100)
        cfg = net.TrainingConfig(rate=0.4, epochs=3, seed=9)
        runs = []
        for _ in range(2):
            zones = net.build_microzones(twolink, layout_2d, speed_layout)
            net.train(zones, data, cfg, twolink.gravity_vec)
            runs.append(zones)
        for a, b in zip(runs[0], runs[1]):
            for name in ("inertial", "coriolis", "gravity", "external"):
                for ua, ub in zip(getattr(a, name), getattr(b, name)):
                    assert np.array_equal(ua.weights, ub.weights)
            assert a.stellate_dyn.w_sp == b.stellate_dyn.w_sp
            assert np.array_equal(a.stellate_stat.w_sc, b.stellate_stat.w_sc)

    def test_absurd_rate_diverges(self, pendulum, small_layout, speed_layout):
        data = self.small_dataset(pendulum, small_layout, speed_layout,
                                  count=50)
        zones = net.build_microzones(pendulum, small_layout, speed_layout)
        cfg = net.TrainingConfig(rate=50.0, epochs=5, seed=0)
        with pytest.raises(net.TrainingDivergence):
            net.train(zones, data, cfg, pendulum.gravity_vec)

    def test_gravity_task_converges(self, pendulum, speed_layout):
        # needs a finer encoder than the coarse shared fixture: the
        # achievable error is set by the coarse-coding resolution
        layout = BasisLayout(ranges=((-np.pi, np.pi),), tilings=12,
                             cells_per_dim=12)
        data = self.small_dataset(pendulum, layout, speed_layout, count=800)
        zones = net.build_microzones(pendulum, layout, speed_layout)
        cfg = net.TrainingConfig(rate=0.5, epochs=10, seed=0)
        report = net.train(zones, data, cfg, pendulum.gravity_vec)
        targets = [float(tb.gravity[0].sum()) for _, _, tb, _, _ in data]
        target_rms = float(np.sqrt(np.mean(np.square(targets))))
        assert report.epochs[-1]["rms"]["gravity"] <= 0.05 * target_rms

    def test_per_joint_supervision_trains(self, pendulum, small_layout,
                                          speed_layout):
        data = self.small_dataset(pendulum, small_layout, speed_layout,
                                  count=400)
        zones = net.build_microzones(pendulum, small_layout, speed_layout)
        cfg = net.TrainingConfig(rate=0.5, epochs=15, seed=0,
                                 supervision="per-joint")
        net.train(zones, data, cfg, pendulum.gravity_vec)
        # only the summed joint torque is supervised, so judge the total
        errs = net.evaluate_errors(zones, data, pendulum.gravity_vec)
        total = np.sum([errs[f] for f in net.TERM_FAMILIES], axis=0)
        targets = [float(tb.total[0]) for _, _, tb, _, _ in data]
        target_rms = float(np.sqrt(np.mean(np.square(targets))))
        assert np.sqrt(np.mean(np.square(total))) < 0.2 * target_rms

    def test_empty_dataset_rejected(self, pendulum, small_layout,
                                    speed_layout):
        zones = net.build_microzones(pendulum, small_layout, speed_layout)
        with pytest.raises(ValueError):
            net.train(zones, [], net.TrainingConfig(), pendulum.gravity_vec)


class TestTrainingConfig:
    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            net.TrainingConfig(rate=0.0)

    def test_invalid_supervision(self):
        with pytest.raises(ValueError):
            net.TrainingConfig(supervision="per-cell")

    def test_report_rows_flatten(self):
        rep = net.TrainingReport()
        rep.epochs.append({"epoch": 0,
                           "rms": {f: 1.0 for f in net.TERM_FAMILIES},
                           "max_abs": {f: 2.0 for f in net.TERM_FAMILIES}})
        rows = rep.rows()
        assert len(rows) == len(net.TERM_FAMILIES)
        assert rows[0] == {"epoch": 0, "term_family": "inertial",
                           "rms": 1.0, "max_abs_err": 2.0}
