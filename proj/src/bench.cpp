#include "starris/bench/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace starris::bench {

namespace {

int rand_index(Rng& rng, int n) {
    return std::min(n - 1, static_cast<int>(rng.uniform() * static_cast<Real>(n)));
}

std::vector<int> random_perm(Rng& rng, int n, int offset = 0) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = offset + i;
    for (int i = n - 1; i > 0; --i) std::swap(p[i], p[rand_index(rng, i + 1)]);
    return p;
}

Real elapsed_ms(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<Real, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

const std::set<std::string> kMethods = {"ao", "ao-exh", "bhgnn", "random-phase"};
const std::set<std::string> kAxes = {"elements", "users", "region-scale", "power-dbm"};

nn::InferenceOutput run_model(const nn::ModelParameters& model,
                              const ChannelRealization& chan, Real p_max,
                              Real noise_power) {
    ad::Tape t;
    nn::BoundParams bound = nn::bind_params(t, model);
    nn::ForwardPass fp = nn::forward(t, model, bound, {&chan}, p_max, noise_power);
    return nn::extract_outputs(t, fp).front();
}

}  // namespace

Real median(std::vector<Real> v) {
    if (v.empty()) throw DomainError("median of empty set");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Real interquartile_range(std::vector<Real> v) {
    if (v.empty()) throw DomainError("IQR of empty set");
    std::sort(v.begin(), v.end());
    auto quantile = [&](Real q) {
        const Real pos = q * static_cast<Real>(v.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        const Real frac = pos - static_cast<Real>(lo);
        return v[lo] * (1.0 - frac) + v[hi] * frac;
    };
    return quantile(0.75) - quantile(0.25);
}

BaselineResult baseline_random_phase(const ChannelRealization& chan, const SystemConfig& cfg,
                                     int n_draws, std::uint64_t seed,
                                     const sca::ScaOptions& opts) {
    if (n_draws < 1) throw DomainError("baseline needs at least one draw");
    BaselineResult best;
    best.sum_rate = -std::numeric_limits<Real>::infinity();
    for (int i = 0; i < n_draws; ++i) {
        Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i));
        StarRisState ris = StarRisState::random_init(chan.total_elems(), rng);
        BeamformingMatrix w0 =
            BeamformingMatrix::random_init(chan.n_tx, chan.n_users, cfg.p_max, rng);
        auto [w, trace] = sca::sca_precoder(chan, ris, w0, cfg.p_max, cfg.noise_power, opts);
        const Real rate = evaluate_sinr(chan, ris, w, cfg.noise_power).sum_rate;
        if (rate > best.sum_rate) {
            best.ris = ris;
            best.w = w;
            best.sum_rate = rate;
        }
    }
    return best;
}

PeAuditReport pe_audit(const nn::ModelParameters& model, const ChannelRealization& chan,
                       const SystemConfig& cfg, int n_perms, std::uint64_t seed) {
    PeAuditReport rep;
    rep.n_perms = n_perms;
    const nn::InferenceOutput base = run_model(model, chan, cfg.p_max, cfg.noise_power);
    const int k = chan.n_users, s = chan.total_elems(), k0 = chan.n_users_t;

    for (int p = 0; p < n_perms; ++p) {
        Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(p));
        // Region membership is positional, so users move only within a region.
        std::vector<int> pu = random_perm(rng, k0);
        std::vector<int> pr = random_perm(rng, k - k0, k0);
        pu.insert(pu.end(), pr.begin(), pr.end());
        std::vector<int> pe = random_perm(rng, s);

        ChannelRealization perm = chan;
        for (int j = 0; j < k; ++j) {
            perm.h_equiv[j] = chan.h_equiv[pu[j]];
            for (int e = 0; e < s; ++e)
                perm.h_equiv[j].row(e) = chan.h_equiv[pu[j]].row(pe[e]);
        }

        const nn::InferenceOutput out = run_model(model, perm, cfg.p_max, cfg.noise_power);
        Real dev = 0;
        for (int j = 0; j < k; ++j)
            dev = std::max(dev, (out.w.w.col(j) - base.w.w.col(pu[j])).cwiseAbs().maxCoeff());
        for (int e = 0; e < s; ++e) {
            dev = std::max(dev, std::abs(out.ris.theta_t(e) - base.ris.theta_t(pe[e])));
            dev = std::max(dev, std::abs(out.ris.theta_r(e) - base.ris.theta_r(pe[e])));
            dev = std::max(dev, std::abs(out.ris.amp_t(e) - base.ris.amp_t(pe[e])));
            dev = std::max(dev, std::abs(out.ris.amp_r(e) - base.ris.amp_r(pe[e])));
        }
        rep.max_output_dev = std::max(rep.max_output_dev, dev);
        rep.max_rate_dev =
            std::max(rep.max_rate_dev, std::abs(out.sum_rate - base.sum_rate));
    }
    return rep;
}

void ExperimentSpec::validate() const {
    if (methods.empty()) throw DomainError("experiment: no methods listed");
    for (const auto& m : methods)
        if (!kMethods.count(m)) throw DomainError("experiment: unknown method '" + m + "'");
    if (!kAxes.count(axis)) throw DomainError("experiment: unknown axis '" + axis + "'");
    if (axis_values.empty()) throw DomainError("experiment: no axis values");
    if (trials < 1) throw DomainError("experiment: trials must be >= 1");
    if (exh_starts < 1 || random_draws < 1)
        throw DomainError("experiment: start/draw counts must be >= 1");
    base.validate();
}

ExperimentSpec ExperimentSpec::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open experiment spec: " + path);
    ExperimentSpec spec;
    std::ostringstream base_lines;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (!trim(line).empty())
                throw IoError("spec line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.rfind("base.", 0) == 0) {
            base_lines << key.substr(5) << " = " << val << "\n";
        } else if (key == "methods") {
            spec.methods = split_list(val);
        } else if (key == "axis") {
            spec.axis = val;
        } else if (key == "axis_values") {
            spec.axis_values.clear();
            for (const auto& v : split_list(val)) spec.axis_values.push_back(std::stod(v));
        } else if (key == "trials") {
            spec.trials = std::stoi(val);
        } else if (key == "seed") {
            spec.seed = std::stoull(val);
        } else if (key == "model_path") {
            spec.model_path = val;
        } else if (key == "exh_starts") {
            spec.exh_starts = std::stoi(val);
        } else if (key == "random_draws") {
            spec.random_draws = std::stoi(val);
        } else if (key == "qos_target_db") {
            spec.qos_target = db_to_linear(std::stod(val));
        } else {
            throw IoError("spec line " + std::to_string(lineno) + ": unknown key '" + key +
                          "'");
        }
    }
    std::istringstream base_in(base_lines.str());
    spec.base = SystemConfig::parse(base_in);
    spec.validate();
    return spec;
}

SystemConfig apply_axis(const SystemConfig& base, const std::string& axis, Real value) {
    SystemConfig cfg = base;
    if (axis == "elements") {
        const int total = static_cast<int>(value);
        if (total <= 0 || total % cfg.n_ris != 0)
            throw DomainError("axis elements: value must be a positive multiple of n_ris");
        cfg.n_elems_per_ris = total / cfg.n_ris;
    } else if (axis == "users") {
        const int k = static_cast<int>(value);
        if (k < 1) throw DomainError("axis users: value must be >= 1");
        const Real frac =
            static_cast<Real>(base.n_users_t_region) / static_cast<Real>(base.n_users);
        cfg.n_users = k;
        cfg.n_users_t_region =
            std::clamp(static_cast<int>(std::lround(frac * k)), 1, k);
    } else if (axis == "region-scale") {
        if (value <= 0) throw DomainError("axis region-scale: factor must be positive");
        auto scale = [&](Rect& r) {
            const Real cx = 0.5 * (r.x_min + r.x_max), cy = 0.5 * (r.y_min + r.y_max);
            r.x_min = cx + value * (r.x_min - cx);
            r.x_max = cx + value * (r.x_max - cx);
            r.y_min = cy + value * (r.y_min - cy);
            r.y_max = cy + value * (r.y_max - cy);
        };
        scale(cfg.user_region_t);
        scale(cfg.user_region_r);
    } else if (axis == "power-dbm") {
        cfg.p_max = dbm_to_watt(value);
    } else {
        throw DomainError("unknown axis '" + axis + "'");
    }
    cfg.validate();
    return cfg;
}

ExperimentOutput run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    ExperimentOutput out;

    bool model_ok = false;
    nn::ModelParameters model;
    std::string model_err;
    if (std::find(spec.methods.begin(), spec.methods.end(), "bhgnn") != spec.methods.end()) {
        try {
            model = nn::load_params(spec.model_path, spec.base.n_tx);
            model_ok = true;
        } catch (const IoError& e) {
            model_err = e.what();
        }
    }

    for (const std::string& method : spec.methods) {
        for (Real value : spec.axis_values) {
            SystemConfig cfg;
            std::string cell_skip;
            try {
                cfg = apply_axis(spec.base, spec.axis, value);
            } catch (const DomainError& e) {
                cell_skip = e.what();
            }
            if (cell_skip.empty() && method == "bhgnn" && !model_ok)
                cell_skip = "model unavailable: " + model_err;

            for (int trial = 0; trial < spec.trials; ++trial) {
                ResultRow row;
                row.method = method;
                row.axis_value = value;
                row.trial_seed = spec.seed + static_cast<std::uint64_t>(trial);
                if (!cell_skip.empty()) {
                    row.skipped = true;
                    row.note = cell_skip;
                    out.rows.push_back(row);
                    continue;
                }

                SystemConfig trial_cfg = cfg;
                trial_cfg.rng_seed = spec.seed;
                const ChannelRealization chan =
                    sample_channels(trial_cfg, static_cast<std::uint64_t>(trial));

                StarRisState ris;
                BeamformingMatrix w;
                const auto t0 = std::chrono::steady_clock::now();
                if (method == "ao") {
                    Rng rng = Rng::substream(spec.seed, 500000 + static_cast<std::uint64_t>(trial));
                    sca::random_ao_init(chan, trial_cfg, rng, ris, w);
                    sca::AoResult res = sca::ao_optimize(chan, trial_cfg, ris, w, spec.sca);
                    ris = res.ris;
                    w = res.w;
                    row.iterations = res.subproblem_iterations;
                } else if (method == "ao-exh") {
                    sca::AoResult res = sca::ao_exhaustive(
                        chan, trial_cfg, spec.exh_starts,
                        spec.seed + 7919 * static_cast<std::uint64_t>(trial), spec.sca);
                    ris = res.ris;
                    w = res.w;
                    row.iterations = res.subproblem_iterations;
                } else if (method == "random-phase") {
                    BaselineResult res = baseline_random_phase(
                        chan, trial_cfg, spec.random_draws,
                        spec.seed + 104729 * static_cast<std::uint64_t>(trial), spec.sca);
                    ris = res.ris;
                    w = res.w;
                } else {  // bhgnn
                    nn::InferenceOutput res =
                        run_model(model, chan, trial_cfg.p_max, trial_cfg.noise_power);
                    ris = res.ris;
                    w = res.w;
                }
                row.wall_ms = elapsed_ms(t0);

                const SinrReport rep = evaluate_sinr(chan, ris, w, trial_cfg.noise_power);
                row.sum_rate = rep.sum_rate;
                row.min_sinr = rep.sinr.minCoeff();
                Real viol = 0;
                for (Eigen::Index i = 0; i < rep.sinr.size(); ++i)
                    viol += std::max(spec.qos_target - rep.sinr(i), 0.0);
                row.qos_violation = viol / static_cast<Real>(rep.sinr.size());

                const FeasibilityReport feas = check_feasibility(ris, w, trial_cfg.p_max);
                if (!feas.feasible()) {
                    std::ostringstream note;
                    note << "constraint violation " << std::setprecision(3)
                         << feas.max_violation();
                    row.note = note.str();
                }
                out.rows.push_back(row);
            }
        }
    }

    // Per (method, axis value) summaries; the plain alternating solve is the
    // reference for the relative column when present.
    auto cell_rows = [&](const std::string& m, Real v) {
        std::vector<const ResultRow*> rows;
        for (const ResultRow& r : out.rows)
            if (r.method == m && r.axis_value == v && !r.skipped) rows.push_back(&r);
        return rows;
    };
    for (const std::string& method : spec.methods) {
        for (Real value : spec.axis_values) {
            auto rows = cell_rows(method, value);
            SummaryRow s;
            s.method = method;
            s.axis_value = value;
            s.n = static_cast<int>(rows.size());
            if (!rows.empty()) {
                for (const ResultRow* r : rows) s.mean += r->sum_rate;
                s.mean /= static_cast<Real>(rows.size());
                Real var = 0;
                for (const ResultRow* r : rows) {
                    const Real d = r->sum_rate - s.mean;
                    var += d * d;
                }
                if (rows.size() > 1) {
                    var /= static_cast<Real>(rows.size() - 1);
                    s.ci95 = 1.96 * std::sqrt(var / static_cast<Real>(rows.size()));
                }
                auto ao = cell_rows("ao", value);
                if (!ao.empty()) {
                    Real ao_mean = 0;
                    for (const ResultRow* r : ao) ao_mean += r->sum_rate;
                    ao_mean /= static_cast<Real>(ao.size());
                    if (ao_mean != 0) s.rel_to_ao = 100.0 * s.mean / ao_mean;
                }
            }
            out.summary.push_back(s);
        }
    }
    return out;
}

void write_results_csv(const ExperimentOutput& out, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << std::setprecision(12);
    f << "method,axis_value,trial_seed,sum_rate,min_sinr,qos_violation,iterations,"
         "skipped,note\n";
    for (const ResultRow& r : out.rows)
        f << r.method << ',' << r.axis_value << ',' << r.trial_seed << ',' << r.sum_rate
          << ',' << r.min_sinr << ',' << r.qos_violation << ',' << r.iterations << ','
          << (r.skipped ? 1 : 0) << ',' << r.note << '\n';
    if (!f) throw IoError("write failed: " + path);
}

void write_summary_csv(const ExperimentOutput& out, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << std::setprecision(12);
    f << "method,axis_value,n,mean_sum_rate,ci95,rel_to_ao_pct\n";
    for (const SummaryRow& s : out.summary)
        f << s.method << ',' << s.axis_value << ',' << s.n << ',' << s.mean << ',' << s.ci95
          << ',' << s.rel_to_ao << '\n';
    if (!f) throw IoError("write failed: " + path);
}

std::vector<TimingRow> timing_probe(const SystemConfig& base,
                                    const nn::ModelParameters& model,
                                    const std::vector<TimingCell>& cells, int reps,
                                    std::uint64_t seed, const sca::ScaOptions& opts) {
    reps = std::max(reps, 20);  // medians from fewer reps are too noisy
    std::vector<TimingRow> out;
    for (const TimingCell& cell : cells) {
        SystemConfig cfg = base;
        cfg.n_ris = cell.n_ris;
        cfg.n_elems_per_ris = cell.n_elems_per_ris;
        cfg.n_users = cell.n_users;
        cfg.n_users_t_region = std::max(1, cell.n_users / 2);
        cfg.validate();

        std::vector<Real> ao_ms, nn_ms;
        for (int i = 0; i < reps; ++i) {
            cfg.rng_seed = seed;
            const ChannelRealization chan =
                sample_channels(cfg, static_cast<std::uint64_t>(i));

            auto t0 = std::chrono::steady_clock::now();
            StarRisState ris;
            BeamformingMatrix w;
            Rng rng = Rng::substream(seed, 900000 + static_cast<std::uint64_t>(i));
            sca::random_ao_init(chan, cfg, rng, ris, w);
            sca::ao_optimize(chan, cfg, ris, w, opts);
            ao_ms.push_back(elapsed_ms(t0));

            t0 = std::chrono::steady_clock::now();
            run_model(model, chan, cfg.p_max, cfg.noise_power);
            nn_ms.push_back(elapsed_ms(t0));
        }
        TimingRow ao{cell, "ao", reps, median(ao_ms), interquartile_range(ao_ms)};
        TimingRow nn{cell, "bhgnn", reps, median(nn_ms), interquartile_range(nn_ms)};
        out.push_back(ao);
        out.push_back(nn);
    }
    return out;
}

void write_timing_csv(const std::vector<TimingRow>& rows, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << std::setprecision(12);
    f << "n_ris,n_elems_per_ris,n_users,method,reps,median_ms,iqr_ms\n";
    for (const TimingRow& r : rows)
        f << r.cell.n_ris << ',' << r.cell.n_elems_per_ris << ',' << r.cell.n_users << ','
          << r.method << ',' << r.reps << ',' << r.median_ms << ',' << r.iqr_ms << '\n';
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace starris::bench
