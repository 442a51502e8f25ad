#pragma once

#include <string>
#include <vector>

#include "starris/nn/bhgnn.hpp"
#include "starris/sca/solver.hpp"

namespace starris::bench {

// Random surface baseline: uniform phases, equal energy split, precoder
// tuned for the drawn surface; best of n_draws kept.
struct BaselineResult {
    StarRisState ris;
    BeamformingMatrix w;
    Real sum_rate = 0;
};

BaselineResult baseline_random_phase(const ChannelRealization& chan, const SystemConfig& cfg,
                                     int n_draws, std::uint64_t seed,
                                     const sca::ScaOptions& opts = {});

// Permutation audit: random user permutations (within each region, since
// region membership is positional) and element permutations; outputs must
// permute exactly and the sum rate must not move.
struct PeAuditReport {
    int n_perms = 0;
    Real max_output_dev = 0;  // worst elementwise deviation of (W, theta, a)
    Real max_rate_dev = 0;
};

PeAuditReport pe_audit(const nn::ModelParameters& model, const ChannelRealization& chan,
                       const SystemConfig& cfg, int n_perms, std::uint64_t seed);

struct ExperimentSpec {
    std::vector<std::string> methods;  // subset of ao, ao-exh, bhgnn, random-phase
    std::string axis = "elements";     // elements | users | region-scale | power-dbm
    std::vector<Real> axis_values;
    int trials = 10;
    std::uint64_t seed = 1;
    SystemConfig base;
    std::string model_path;  // required when bhgnn is listed
    int exh_starts = 16;
    int random_draws = 8;
    Real qos_target = db_to_linear(1.0);  // reporting threshold, linear
    sca::ScaOptions sca{};

    void validate() const;
    // Plain key = value file; list values are comma separated. The embedded
    // system config uses the same schema under a `base.` prefix.
    static ExperimentSpec load(const std::string& path);
};

// Applies one axis value to the base config.
SystemConfig apply_axis(const SystemConfig& base, const std::string& axis, Real value);

struct ResultRow {
    std::string method;
    Real axis_value = 0;
    std::uint64_t trial_seed = 0;
    Real sum_rate = 0;
    Real min_sinr = 0;
    Real qos_violation = 0;  // mean over users of max(target - sinr, 0)
    Real wall_ms = 0;        // kept in memory; excluded from the CSV so
                             // reruns are byte-identical
    int iterations = 0;      // inner iterations for analytic methods
    bool skipped = false;
    std::string note;
};

struct SummaryRow {
    std::string method;
    Real axis_value = 0;
    int n = 0;
    Real mean = 0;
    Real ci95 = 0;           // normal-approximation half width
    Real rel_to_ao = -1;     // percent; -1 when no ao reference exists
};

struct ExperimentOutput {
    std::vector<ResultRow> rows;        // grid order: method, axis, trial
    std::vector<SummaryRow> summary;
};

ExperimentOutput run_experiment(const ExperimentSpec& spec);

void write_results_csv(const ExperimentOutput& out, const std::string& path);
void write_summary_csv(const ExperimentOutput& out, const std::string& path);

// Wall-time comparison grid. Each cell reruns both the alternating analytic
// solve and one-sample model inference on fresh channels.
struct TimingCell {
    int n_ris = 1, n_elems_per_ris = 4, n_users = 4;
};

struct TimingRow {
    TimingCell cell;
    std::string method;  // ao | bhgnn
    int reps = 0;
    Real median_ms = 0, iqr_ms = 0;
};

std::vector<TimingRow> timing_probe(const SystemConfig& base,
                                    const nn::ModelParameters& model,
                                    const std::vector<TimingCell>& cells, int reps,
                                    std::uint64_t seed, const sca::ScaOptions& opts);

void write_timing_csv(const std::vector<TimingRow>& rows, const std::string& path);

Real median(std::vector<Real> v);
Real interquartile_range(std::vector<Real> v);

}  // namespace starris::bench
