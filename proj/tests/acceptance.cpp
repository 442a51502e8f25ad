// End-to-end acceptance gate. Each test case audits one release criterion and
// prints a single PASS/FAIL line with the measured numbers. Expensive
// fixtures (the desk-scale dataset and trained models) are built once and
// shared across criteria.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <memory>

#include "starris/bench/bench.hpp"
#include "starris/train/trainer.hpp"

using namespace starris;

namespace {

using Clock = std::chrono::steady_clock;

Real seconds_since(const Clock::time_point& t0) {
    return std::chrono::duration<Real>(Clock::now() - t0).count();
}

void report(int criterion, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion, detail.c_str());
    std::fflush(stdout);
    CHECK_MESSAGE(ok, "criterion ", criterion, ": ", detail);
}

std::string fmt(Real v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Desk-scale fixture: 2000 samples at (N_t=8, K=4, L=2, M=4), a sum-rate
// trained model, and analytic baselines on the 200-sample validation split.

struct DeskFixture {
    SystemConfig cfg;
    Dataset data;
    train::TrainConfig tc;
    train::TrainResult sum_rate_run;
    Real ao_val_mean = 0;
    Real rand8_val_mean = 0;

    DeskFixture() {
        cfg.n_tx = 8;
        cfg.n_users = 4;
        cfg.n_ris = 2;
        cfg.n_elems_per_ris = 4;
        cfg.n_users_t_region = 2;
        cfg.rng_seed = 42;
        data.cfg = cfg;
        for (int i = 0; i < 2000; ++i)
            data.samples.push_back(sample_channels(cfg, static_cast<std::uint64_t>(i)));

        tc.model.n_tx = 8;
        tc.model.feature_dim = 64;
        tc.model.rounds = 2;
        tc.max_epochs = 30;
        tc.patience = 10;
        tc.seed = 1;
        sum_rate_run = train::train(data, tc);

        sca::ScaOptions opts;
        Real ao_sum = 0, rand_sum = 0;
        const std::size_t n_val = data.size() - data.train_count();
        for (std::size_t i = 0; i < n_val; ++i) {
            const ChannelRealization& chan = data.samples[data.train_count() + i];
            Rng rng = Rng::substream(7, i);
            StarRisState ris;
            BeamformingMatrix w;
            sca::random_ao_init(chan, cfg, rng, ris, w);
            ao_sum += sca::ao_optimize(chan, cfg, ris, w, opts).sum_rate_trace.back();
            rand_sum += bench::baseline_random_phase(chan, cfg, 8, 100 + i, opts).sum_rate;
        }
        ao_val_mean = ao_sum / static_cast<Real>(n_val);
        rand8_val_mean = rand_sum / static_cast<Real>(n_val);
    }

    Real best_val_sum_rate() const {
        return sum_rate_run.log.epochs[static_cast<std::size_t>(sum_rate_run.log.best_epoch)]
            .val_sum_rate;
    }
};

DeskFixture& desk() {
    static DeskFixture fixture;
    return fixture;
}

// Mean sum rates of the trained model and the analytic solver over fresh
// channels at an unseen configuration.
std::pair<Real, Real> generalization_means(const nn::ModelParameters& model,
                                           const SystemConfig& cfg, int n_samples) {
    sca::ScaOptions opts;
    Real nn_sum = 0, ao_sum = 0;
    for (int i = 0; i < n_samples; ++i) {
        const ChannelRealization chan = sample_channels(cfg, 5000 + static_cast<std::uint64_t>(i));
        ad::Tape t;
        nn::BoundParams bound = nn::bind_params(t, model);
        nn::ForwardPass fp = nn::forward(t, model, bound, {&chan}, cfg.p_max, cfg.noise_power);
        nn_sum += nn::extract_outputs(t, fp).front().sum_rate;

        Rng rng = Rng::substream(31, static_cast<std::uint64_t>(i));
        StarRisState ris;
        BeamformingMatrix w;
        sca::random_ao_init(chan, cfg, rng, ris, w);
        ao_sum += sca::ao_optimize(chan, cfg, ris, w, opts).sum_rate_trace.back();
    }
    return {nn_sum / n_samples, ao_sum / n_samples};
}

Real r_squared(const std::vector<Real>& x, const std::vector<Real>& y) {
    const auto n = static_cast<Real>(x.size());
    Real sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const Real slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const Real intercept = (sy - slope * sx) / n;
    Real ss_res = 0, ss_tot = 0;
    const Real mean_y = sy / n;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Real fit = slope * x[i] + intercept;
        ss_res += (y[i] - fit) * (y[i] - fit);
        ss_tot += (y[i] - mean_y) * (y[i] - mean_y);
    }
    return 1.0 - ss_res / ss_tot;
}

std::uint64_t forward_model_flops(const nn::ModelParameters& model, const SystemConfig& cfg) {
    const ChannelRealization chan = sample_channels(cfg, 0);
    ad::Tape t;
    nn::BoundParams bound = nn::bind_params(t, model);
    return nn::forward(t, model, bound, {&chan}, cfg.p_max, cfg.noise_power).model_flops;
}

// Shared corpus for criteria 1 and 2: one sub-solver sweep per instance.
struct SubSolverAudit {
    int monotone_fail = 0;
    int modulus_ok = 0;  // final max | |s|-1 | <= 1e-2
    Real proj_change_sum = 0;
    int n = 0;
    Real wall_s = 0;
};

SubSolverAudit run_sub_solver_audit(int n_instances) {
    SystemConfig cfg;
    cfg.n_tx = 4;
    cfg.n_users = 2;
    cfg.n_ris = 2;
    cfg.n_elems_per_ris = 2;
    cfg.n_users_t_region = 1;
    cfg.rng_seed = 2;

    auto monotone = [](const std::vector<Real>& trace) {
        for (std::size_t i = 1; i < trace.size(); ++i)
            if (trace[i] < trace[i - 1] - 1e-6) return false;
        return true;
    };

    SubSolverAudit audit;
    audit.n = n_instances;
    sca::ScaOptions opts;
    const auto t0 = Clock::now();
    for (int i = 0; i < n_instances; ++i) {
        const ChannelRealization chan = sample_channels(cfg, static_cast<std::uint64_t>(i));
        Rng rng = Rng::substream(3, static_cast<std::uint64_t>(i));
        StarRisState ris;
        BeamformingMatrix w;
        sca::random_ao_init(chan, cfg, rng, ris, w);

        auto [ris_p, tr_p] = sca::sca_phase(chan, ris, w, cfg.noise_power, opts);
        auto [ris_a, tr_a] = sca::sca_amplitude(chan, ris_p, w, cfg.noise_power, opts);
        auto [w_p, tr_w] =
            sca::sca_precoder(chan, ris_a, w, cfg.p_max, cfg.noise_power, opts);
        if (!monotone(tr_p.objective) || !monotone(tr_a.objective) ||
            !monotone(tr_w.objective))
            ++audit.monotone_fail;

        if (tr_p.final_modulus_violation <= 1e-2) ++audit.modulus_ok;
        audit.proj_change_sum += std::abs(tr_p.projected_sum_rate - tr_p.relaxed_sum_rate) /
                                 std::max(tr_p.relaxed_sum_rate, 1e-12);
    }
    audit.wall_s = seconds_since(t0);
    return audit;
}

SubSolverAudit& sub_solver_audit() {
    static SubSolverAudit audit = run_sub_solver_audit(200);
    return audit;
}

}  // namespace

TEST_CASE("criterion 1: sub-solver monotonicity") {
    const SubSolverAudit& a = sub_solver_audit();
    const bool ok = a.monotone_fail == 0 && a.wall_s < 300.0;
    report(1, ok,
           "all sub-solver traces non-decreasing within 1e-6 on " +
               std::to_string(a.n - a.monotone_fail) + "/" + std::to_string(a.n) +
               " instances in " + fmt(a.wall_s) + " s (target < 300 s)");
}

TEST_CASE("criterion 2: penalty effectiveness") {
    const SubSolverAudit& a = sub_solver_audit();
    const Real modulus_frac = static_cast<Real>(a.modulus_ok) / a.n;
    const Real mean_proj_change = a.proj_change_sum / a.n;
    const bool ok = modulus_frac >= 0.99 && mean_proj_change < 0.01;
    report(2, ok,
           "modulus violation <= 1e-2 on " + fmt(100.0 * modulus_frac) +
               "% of instances (need >= 99%), mean projection sum-rate change " +
               fmt(100.0 * mean_proj_change) + "% (need < 1%)");
}

TEST_CASE("criterion 3: tiny-instance optimality vs brute force") {
    SystemConfig cfg;
    cfg.n_tx = 2;
    cfg.n_users = 1;
    cfg.n_ris = 1;
    cfg.n_elems_per_ris = 2;
    cfg.n_users_t_region = 1;
    cfg.rng_seed = 8;

    sca::ScaOptions opts;
    const int n_instances = 50, grid = 256;
    Real worst_ratio = 1e300;
    for (int i = 0; i < n_instances; ++i) {
        const ChannelRealization chan = sample_channels(cfg, static_cast<std::uint64_t>(i));
        // Single T-region user: full energy to transmission, exhaustive phase
        // grid, matched-filter precoder (rate depends only on ||h_eff||).
        Real oracle = 0;
        for (int p1 = 0; p1 < grid; ++p1) {
            for (int p2 = 0; p2 < grid; ++p2) {
                const Complex c1 = std::polar(1.0, 2.0 * kPi * p1 / grid);
                const Complex c2 = std::polar(1.0, 2.0 * kPi * p2 / grid);
                const CVec h_eff =
                    (c1 * chan.h_equiv[0].row(0) + c2 * chan.h_equiv[0].row(1)).transpose();
                const Real rate =
                    std::log2(1.0 + cfg.p_max * h_eff.squaredNorm() / cfg.noise_power);
                oracle = std::max(oracle, rate);
            }
        }
        const sca::AoResult res =
            sca::ao_exhaustive(chan, cfg, 16, 1000 + static_cast<std::uint64_t>(i), opts);
        worst_ratio = std::min(worst_ratio, res.sum_rate_trace.back() / oracle);
    }
    const bool ok = worst_ratio >= 0.98;
    report(3, ok,
           "16-start solver reaches " + fmt(100.0 * worst_ratio) +
               "% of the 256^2 phase-grid oracle in the worst of 50 instances (need >= 98%)");
}

TEST_CASE("criterion 4: exact permutation equivariance") {
    const DeskFixture& d = desk();
    const ChannelRealization chan = sample_channels(d.cfg, 3000);

    Rng rng(99);
    nn::ModelParameters untrained = nn::ModelParameters::init(d.tc.model, rng);
    const bench::PeAuditReport before = bench::pe_audit(untrained, chan, d.cfg, 100, 555);
    const bench::PeAuditReport after =
        bench::pe_audit(d.sum_rate_run.best, chan, d.cfg, 100, 556);

    const bool ok = before.max_output_dev == 0.0 && after.max_output_dev == 0.0 &&
                    before.max_rate_dev < 1e-6 && after.max_rate_dev < 1e-6;
    report(4, ok,
           "output deviation " + fmt(before.max_output_dev) + " (untrained) / " +
               fmt(after.max_output_dev) + " (trained), sum-rate deviation " +
               fmt(before.max_rate_dev) + " / " + fmt(after.max_rate_dev) +
               " over 100 permutation pairs each (need exactly 0 and < 1e-6)");
}

TEST_CASE("criterion 5: gradient correctness against finite differences") {
    SystemConfig cfg;
    cfg.n_tx = 2;
    cfg.n_users = 2;
    cfg.n_ris = 1;
    cfg.n_elems_per_ris = 2;
    cfg.n_users_t_region = 1;
    cfg.rng_seed = 12;
    const ChannelRealization chan = sample_channels(cfg, 0);

    nn::ModelConfig mc;
    mc.n_tx = 2;
    mc.feature_dim = 4;
    mc.rounds = 2;
    Rng rng(4);
    nn::ModelParameters params = nn::ModelParameters::init(mc, rng);

    auto loss_at = [&](const nn::ModelParameters& p) {
        ad::Tape t;
        nn::BoundParams bound = nn::bind_params(t, p);
        nn::ForwardPass fp = nn::forward(t, p, bound, {&chan}, cfg.p_max, cfg.noise_power);
        return t.val(train::loss_sum_rate(t, fp))(0, 0);
    };

    ad::Tape t;
    nn::BoundParams bound = nn::bind_params(t, params);
    nn::ForwardPass fp = nn::forward(t, params, bound, {&chan}, cfg.p_max, cfg.noise_power);
    t.backward(train::loss_sum_rate(t, fp));

    const Real step = 1e-5;
    int checked = 0, failed = 0;
    Real worst = 0;
    for (std::size_t n = 0; n < params.nets.size(); ++n) {
        for (std::size_t l = 0; l < params.nets[n].weights.size(); ++l) {
            for (int part = 0; part < 2; ++part) {
                Mat& m = part == 0 ? params.nets[n].weights[l] : params.nets[n].biases[l];
                const Mat& g = part == 0 ? t.grad(bound.weights[n][l])
                                         : t.grad(bound.biases[n][l]);
                for (Eigen::Index i = 0; i < m.size(); ++i) {
                    const Real saved = m(i);
                    m(i) = saved + step;
                    const Real up = loss_at(params);
                    m(i) = saved - step;
                    const Real down = loss_at(params);
                    m(i) = saved;
                    const Real fd = (up - down) / (2.0 * step);
                    // The 1e-3 floor keeps the relative test meaningful where
                    // the true gradient is ~0 and FD is pure rounding noise.
                    const Real rel = std::abs(g(i) - fd) /
                                     std::max({std::abs(fd), std::abs(g(i)), 1e-3});
                    worst = std::max(worst, rel);
                    if (rel > 1e-4) ++failed;
                    ++checked;
                }
            }
        }
    }
    const bool ok = failed == 0 && checked > 500;
    report(5, ok,
           std::to_string(checked - failed) + "/" + std::to_string(checked) +
               " parameter gradients within 1e-4 relative of central differences (worst " +
               fmt(worst) + ")");
}

TEST_CASE("criterion 6: constraints hold by construction") {
    SystemConfig cfg;
    cfg.n_tx = 4;
    cfg.n_users = 3;
    cfg.n_ris = 2;
    cfg.n_elems_per_ris = 2;
    cfg.n_users_t_region = 2;
    cfg.rng_seed = 6;

    nn::ModelConfig mc;
    mc.n_tx = 4;
    mc.feature_dim = 8;
    mc.rounds = 2;

    const int n_batches = 100, batch_size = 100;
    int exceptions = 0;
    Real worst_power = 0, worst_energy = 0;
    for (int b = 0; b < n_batches; ++b) {
        Rng rng(static_cast<std::uint64_t>(b) + 1);
        nn::ModelParameters params = nn::ModelParameters::init(mc, rng);
        std::vector<ChannelRealization> chans;
        std::vector<const ChannelRealization*> batch;
        for (int i = 0; i < batch_size; ++i)
            chans.push_back(sample_channels(cfg, static_cast<std::uint64_t>(b * batch_size + i)));
        for (const auto& c : chans) batch.push_back(&c);

        ad::Tape t;
        nn::BoundParams bound = nn::bind_params(t, params);
        nn::ForwardPass fp = nn::forward(t, params, bound, batch, cfg.p_max, cfg.noise_power);
        for (const nn::InferenceOutput& out : nn::extract_outputs(t, fp)) {
            const Real power_rel =
                std::abs(out.w.w.squaredNorm() - cfg.p_max) / cfg.p_max;
            worst_power = std::max(worst_power, power_rel);
            for (int s = 0; s < out.ris.total_elems(); ++s) {
                const Real e = out.ris.amp_t(s) * out.ris.amp_t(s) +
                               out.ris.amp_r(s) * out.ris.amp_r(s);
                worst_energy = std::max(worst_energy, std::abs(e - 1.0));
            }
            if (power_rel > 1e-9) ++exceptions;
        }
        if (worst_energy > 1e-12) ++exceptions;
    }
    const bool ok = exceptions == 0 && worst_power <= 1e-9 && worst_energy <= 1e-12;
    report(6, ok,
           "10^4 forward passes: worst power error " + fmt(worst_power) +
               " relative (need <= 1e-9), worst energy-split error " + fmt(worst_energy) +
               " (need <= 1e-12), " + std::to_string(exceptions) + " exceptions");
}

TEST_CASE("criterion 7: learning efficacy at desk scale") {
    const DeskFixture& d = desk();
    const Real nn_val = d.best_val_sum_rate();
    const Real vs_ao = nn_val / d.ao_val_mean;
    const Real vs_rand = nn_val / d.rand8_val_mean;
    const bool ok = vs_ao >= 0.85 && vs_rand >= 1.20;
    report(7, ok,
           "trained model validation mean " + fmt(nn_val) + " = " + fmt(100.0 * vs_ao) +
               "% of the alternating solver (" + fmt(d.ao_val_mean) + ", need >= 85%) and " +
               fmt(100.0 * vs_rand) + "% of best-of-8 random phases (" +
               fmt(d.rand8_val_mean) + ", need >= 120%)");
}

TEST_CASE("criterion 8: generalization without retraining") {
    const DeskFixture& d = desk();

    SystemConfig more_users = d.cfg;
    more_users.n_users = 6;
    more_users.n_users_t_region = 3;
    const auto [nn_k, ao_k] = generalization_means(d.sum_rate_run.best, more_users, 50);

    SystemConfig more_elems = d.cfg;
    more_elems.n_elems_per_ris = 8;
    const auto [nn_s, ao_s] = generalization_means(d.sum_rate_run.best, more_elems, 50);

    const Real ratio_k = nn_k / ao_k, ratio_s = nn_s / ao_s;
    const bool ok = ratio_k >= 0.70 && ratio_s >= 0.70;
    report(8, ok,
           "unseen K=6: " + fmt(100.0 * ratio_k) + "% of the alternating solver (" + fmt(nn_k) +
               " vs " + fmt(ao_k) + "); unseen M=8: " + fmt(100.0 * ratio_s) + "% (" +
               fmt(nn_s) + " vs " + fmt(ao_s) + "); need >= 70% each");
}

TEST_CASE("criterion 9: QoS training reduces violations") {
    // The sum-rate fixture geometry puts the R rectangle ~9 dB farther from
    // the surfaces than the T rectangle, and at 30 dBm even a zero-forcing
    // oracle cannot hold every user at the 1 dB floor (best random-surface
    // ZF min-SINR sits at 0.5..1.1 against a 1.26 target). The QoS scenario
    // therefore uses regions mirrored about the surface line and a 40 dBm
    // budget, where the floor is comfortably reachable and the dual ascent
    // has something to enforce.
    SystemConfig qcfg;
    qcfg.n_tx = 8;
    qcfg.n_users = 2;
    qcfg.n_ris = 2;
    qcfg.n_elems_per_ris = 4;
    qcfg.n_users_t_region = 1;
    qcfg.rng_seed = 42;
    qcfg.user_region_t = {10.0, 20.0, 20.0, 30.0};
    qcfg.user_region_r = {10.0, 20.0, -30.0, -20.0};
    qcfg.p_max = dbm_to_watt(40.0);
    Dataset qdata;
    qdata.cfg = qcfg;
    for (int i = 0; i < 2000; ++i)
        qdata.samples.push_back(sample_channels(qcfg, static_cast<std::uint64_t>(i)));

    train::TrainConfig qc;
    qc.model.n_tx = qcfg.n_tx;
    qc.model.feature_dim = 64;
    qc.model.rounds = 2;
    qc.seed = 1;
    qc.max_epochs = 60;
    qc.qos_enabled = true;
    qc.qos_target = db_to_linear(1.0);
    qc.dual_lr = 10.0;
    qc.patience = 1000;  // run all epochs; the audit is on the violation trend
    const train::TrainResult run = train::train(qdata, qc);

    std::vector<Real> smoothed;
    const auto& epochs = run.log.epochs;
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        Real acc = 0;
        const std::size_t from = i >= 4 ? i - 4 : 0;
        for (std::size_t j = from; j <= i; ++j) acc += epochs[j].mean_violation;
        smoothed.push_back(acc / static_cast<Real>(i - from + 1));
    }
    // Slack covers minibatch noise; it is under 1% of the starting violation.
    bool trend_ok = true;
    for (std::size_t i = 5; i < smoothed.size(); ++i)
        if (smoothed[i] > smoothed[i - 1] + 5e-3) trend_ok = false;

    const Real final_viol = epochs.back().mean_violation;
    const bool ok = !run.aborted && final_viol <= 0.05 && trend_ok;
    report(9, ok,
           "final mean SINR violation " + fmt(final_viol) +
               " (need <= 0.05), window-5 smoothed trend " +
               (trend_ok ? "non-increasing" : "increased") + " over " +
               std::to_string(epochs.size()) + " epochs");
}

TEST_CASE("criterion 10: runtime ordering") {
    const DeskFixture& d = desk();
    SystemConfig base = d.cfg;
    // Reduced solver budget keeps the grid tractable; it only speeds the
    // analytic side up, so the ordinal comparison stays conservative.
    sca::ScaOptions opts;
    opts.ao_max_outer = 1;
    opts.max_iterations = 5;

    std::vector<bench::TimingCell> cells = {{2, 8, 4}, {2, 8, 8}, {2, 8, 16}};
    const auto rows = bench::timing_probe(base, d.sum_rate_run.best, cells, 20, 77, opts);
    // rows: (cell, ao), (cell, bhgnn) per cell in order
    const Real ao_k4 = rows[0].median_ms, nn_k4 = rows[1].median_ms;
    const Real ao_k8 = rows[2].median_ms, nn_k8 = rows[3].median_ms;
    const Real ao_k16 = rows[4].median_ms, nn_k16 = rows[5].median_ms;
    const Real ratio_k4 = ao_k4 / nn_k4, ratio_k16 = ao_k16 / nn_k16;
    const bool ok = nn_k8 < ao_k8 && ratio_k16 > ratio_k4;
    report(10, ok,
           "at 16 elements / 8 users: model median " + fmt(nn_k8) + " ms < solver median " +
               fmt(ao_k8) + " ms; speedup ratio grows from " + fmt(ratio_k4) + "x (K=4) to " +
               fmt(ratio_k16) + "x (K=16)");
}

TEST_CASE("criterion 11: linear complexity scaling") {
    const DeskFixture& d = desk();

    std::vector<Real> elems = {8, 16, 32, 64}, elem_flops;
    for (Real s : elems) {
        SystemConfig cfg = d.cfg;
        cfg.n_elems_per_ris = static_cast<int>(s) / cfg.n_ris;
        elem_flops.push_back(
            static_cast<Real>(forward_model_flops(d.sum_rate_run.best, cfg)));
    }
    std::vector<Real> users = {2, 4, 8, 16}, user_flops;
    for (Real k : users) {
        SystemConfig cfg = d.cfg;
        cfg.n_users = static_cast<int>(k);
        cfg.n_users_t_region = static_cast<int>(k) / 2;
        user_flops.push_back(
            static_cast<Real>(forward_model_flops(d.sum_rate_run.best, cfg)));
    }
    const Real r2_elems = r_squared(elems, elem_flops);
    const Real r2_users = r_squared(users, user_flops);
    const bool ok = r2_elems > 0.99 && r2_users > 0.99;
    report(11, ok,
           "inference flop count vs element count R^2 = " + fmt(r2_elems) +
               ", vs user count R^2 = " + fmt(r2_users) + " (need > 0.99 each)");
}
