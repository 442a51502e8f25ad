#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "starris/bench/bench.hpp"
#include "starris/dataset.hpp"
#include "starris/train/trainer.hpp"

using namespace starris;

namespace {

Real elapsed_ms(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<Real, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

// Optimizer settings as a `key = value` file; the model shape keys mirror the
// parameter-file manifest. n_tx always comes from the dataset.
train::TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open train config: " + path);
    train::TrainConfig cfg;
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (!trim(line).empty())
                throw IoError("train config line " + std::to_string(lineno) +
                              ": expected key = value");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "lr") cfg.lr = std::stod(val);
        else if (key == "lr_decay") cfg.lr_decay = std::stod(val);
        else if (key == "lr_decay_every") cfg.lr_decay_every = std::stoi(val);
        else if (key == "batch_size") cfg.batch_size = std::stoi(val);
        else if (key == "max_epochs") cfg.max_epochs = std::stoi(val);
        else if (key == "patience") cfg.patience = std::stoi(val);
        else if (key == "qos_enabled") cfg.qos_enabled = (val == "1" || val == "true");
        else if (key == "qos_target_db") cfg.qos_target = db_to_linear(std::stod(val));
        else if (key == "dual_lr") cfg.dual_lr = std::stod(val);
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "feature_dim") cfg.model.feature_dim = std::stoi(val);
        else if (key == "rounds") cfg.model.rounds = std::stoi(val);
        else if (key == "width_mode")
            cfg.model.width_mode =
                val == "table" ? nn::WidthMode::table : nn::WidthMode::derived;
        else
            throw IoError("train config line " + std::to_string(lineno) +
                          ": unknown key '" + key + "'");
    }
    return cfg;
}

int cmd_gen_data(const std::string& config_path, std::size_t n, const std::string& out) {
    SystemConfig cfg = SystemConfig::load(config_path);
    Dataset data = generate_dataset(cfg, n, out);
    std::cout << "wrote " << data.size() << " samples to " << out << "\n";
    return 0;
}

int cmd_solve(const std::string& data_path, const std::string& method, int starts,
              std::uint64_t seed, const std::string& out_path) {
    Dataset data = Dataset::load(data_path);
    sca::ScaOptions opts;
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open for writing: " + out_path);
    out << std::setprecision(12)
        << "sample,sum_rate,subproblem_iterations,wall_ms,modulus_violation\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        const ChannelRealization& chan = data.samples[i];
        const auto t0 = std::chrono::steady_clock::now();
        sca::AoResult res;
        if (method == "ao") {
            Rng rng = Rng::substream(seed, i);
            StarRisState ris;
            BeamformingMatrix w;
            sca::random_ao_init(chan, data.cfg, rng, ris, w);
            res = sca::ao_optimize(chan, data.cfg, ris, w, opts);
        } else {
            res = sca::ao_exhaustive(chan, data.cfg, starts, seed + i, opts);
        }
        out << i << ',' << res.sum_rate_trace.back() << ',' << res.subproblem_iterations
            << ',' << elapsed_ms(t0) << ',' << res.modulus_violation << '\n';
    }
    std::cout << "solved " << data.size() << " samples with " << method << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& model_path, const std::string& log_path) {
    Dataset data = Dataset::load(data_path);
    train::TrainConfig cfg = load_train_config(config_path);
    cfg.model.n_tx = data.cfg.n_tx;
    train::TrainResult res = train::train(data, cfg);
    nn::save_params(res.best, model_path);
    nn::save_params(res.last, model_path + ".last");
    if (!log_path.empty()) res.log.write_csv(log_path);
    std::cout << "trained " << res.log.epochs.size() << " epochs, best epoch "
              << res.log.best_epoch << (res.aborted ? " (aborted on divergence)" : "")
              << "\n";
    return res.aborted ? 1 : 0;
}

int cmd_infer(const std::string& model_path, const std::string& data_path,
              const std::string& out_path) {
    Dataset data = Dataset::load(data_path);
    nn::ModelParameters model = nn::load_params(model_path, data.cfg.n_tx);
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open for writing: " + out_path);
    out << std::setprecision(12) << "sample,sum_rate,min_sinr,wall_ms\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        ad::Tape t;
        nn::BoundParams bound = nn::bind_params(t, model);
        nn::ForwardPass fp = nn::forward(t, model, bound, {&data.samples[i]},
                                         data.cfg.p_max, data.cfg.noise_power);
        nn::InferenceOutput res = nn::extract_outputs(t, fp).front();
        const Real ms = elapsed_ms(t0);
        const SinrReport rep =
            evaluate_sinr(data.samples[i], res.ris, res.w, data.cfg.noise_power);
        out << i << ',' << rep.sum_rate << ',' << rep.sinr.minCoeff() << ',' << ms << '\n';
    }
    std::cout << "inferred " << data.size() << " samples\n";
    return 0;
}

int cmd_bench(const std::string& spec_path, const std::string& out_dir) {
    namespace fs = std::filesystem;
    bench::ExperimentSpec spec = bench::ExperimentSpec::load(spec_path);
    fs::create_directories(out_dir);

    bench::ExperimentOutput out = bench::run_experiment(spec);
    bench::write_results_csv(out, out_dir + "/results.csv");
    bench::write_summary_csv(out, out_dir + "/summary.csv");

    std::ofstream manifest(out_dir + "/manifest.txt");
    manifest << "spec_file = " << spec_path << "\n"
             << "result_rows = " << out.rows.size() << "\n"
             << "summary_rows = " << out.summary.size() << "\n";

    bool model_ok = false;
    nn::ModelParameters model;
    if (!spec.model_path.empty()) {
        try {
            model = nn::load_params(spec.model_path, spec.base.n_tx);
            model_ok = true;
        } catch (const IoError& e) {
            manifest << "model_skip_reason = " << e.what() << "\n";
        }
    } else {
        manifest << "model_skip_reason = no model_path in spec\n";
    }

    if (model_ok) {
        const ChannelRealization chan = sample_channels(spec.base, 0);
        bench::PeAuditReport audit = bench::pe_audit(model, chan, spec.base, 20, spec.seed);
        std::ofstream pe(out_dir + "/pe_audit.csv");
        pe << std::setprecision(12) << "n_perms,max_output_dev,max_rate_dev\n"
           << audit.n_perms << ',' << audit.max_output_dev << ',' << audit.max_rate_dev
           << '\n';

        std::vector<bench::TimingCell> cells;
        if (spec.axis == "elements") {
            for (Real v : spec.axis_values)
                cells.push_back({spec.base.n_ris, static_cast<int>(v) / spec.base.n_ris,
                                 spec.base.n_users});
        } else if (spec.axis == "users") {
            for (Real v : spec.axis_values)
                cells.push_back({spec.base.n_ris, spec.base.n_elems_per_ris,
                                 static_cast<int>(v)});
        } else {
            cells.push_back(
                {spec.base.n_ris, spec.base.n_elems_per_ris, spec.base.n_users});
        }
        auto timing = bench::timing_probe(spec.base, model, cells, 20, spec.seed, spec.sca);
        bench::write_timing_csv(timing, out_dir + "/timing.csv");
        manifest << "timing_rows = " << timing.size() << "\n"
                 << "pe_audit_max_output_dev = " << audit.max_output_dev << "\n";
    }
    std::cout << "benchmark written to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"joint beamforming and STAR-RIS optimization toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path, model_path, log_path, spec_path, out_dir;
    std::string method = "ao";
    std::size_t n_samples = 1000;
    int starts = 16;
    std::uint64_t seed = 1;

    auto* gen = app.add_subcommand("gen-data", "sample and persist a channel dataset");
    gen->add_option("--config", config_path, "system config file")->required();
    gen->add_option("--n", n_samples, "number of samples");
    gen->add_option("--out", out_path, "output dataset path")->required();

    auto* solve = app.add_subcommand("solve", "run the analytic solver over a dataset");
    solve->add_option("--data", data_path, "dataset path")->required();
    solve->add_option("--method", method, "ao or ao-exh")
        ->check(CLI::IsMember({"ao", "ao-exh"}));
    solve->add_option("--starts", starts, "restart count for ao-exh");
    solve->add_option("--seed", seed, "initialization seed");
    solve->add_option("--out", out_path, "per-sample result CSV")->required();

    auto* tr = app.add_subcommand("train", "train the graph model on a dataset");
    tr->add_option("--config", config_path, "training config file")->required();
    tr->add_option("--data", data_path, "dataset path")->required();
    tr->add_option("--out-model", model_path, "best checkpoint path")->required();
    tr->add_option("--log", log_path, "epoch log CSV");

    auto* inf = app.add_subcommand("infer", "run a trained model over a dataset");
    inf->add_option("--model", model_path, "parameter file")->required();
    inf->add_option("--data", data_path, "dataset path")->required();
    inf->add_option("--out", out_path, "per-sample result CSV")->required();

    auto* be = app.add_subcommand("bench", "run a benchmark sweep from a spec file");
    be->add_option("--spec", spec_path, "experiment spec file")->required();
    be->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, n_samples, out_path);
        if (solve->parsed()) return cmd_solve(data_path, method, starts, seed, out_path);
        if (tr->parsed()) return cmd_train(config_path, data_path, model_path, log_path);
        if (inf->parsed()) return cmd_infer(model_path, data_path, out_path);
        if (be->parsed()) return cmd_bench(spec_path, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
